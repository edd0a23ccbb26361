"""Command-line pipeline driver.

Stages are explicit subcommands connected by artifact files:

    crossrec ingest        raw catalog -> cleaned catalog + summary
    crossrec train-genres  cleaned catalogs -> genre embedding model
    crossrec train         catalogs + genre model -> fusion checkpoint
    crossrec index         target catalog + artifacts -> feature index
    crossrec recommend     seeds + index -> ranked list
    crossrec evaluate      ratings + index -> MAE/RMSE report
    crossrec ablate        ratings + index -> one report per scoring mode

Every command is deterministic for a fixed seed: rerunning with identical
inputs produces byte-identical outputs. Exit codes: 0 success, 2 usage or
validation, 3 training failure, 4 inference failure, 5 evaluation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import fusion, trainer
from .binio import fnv1a64
from .catalog import Catalog, clean, load_catalog, load_ratings, save_catalog
from .embeddings import (
    EncoderProvider,
    FallbackProvider,
    FileBackedProvider,
    GenreTrainConfig,
    load_genre_model,
    save_genre_model,
    train_genre_model,
)
from .errors import (
    CorruptFile,
    CrossRecError,
    DegenerateCorpus,
    DivergedLoss,
    IncompatibleIndex,
    MissingEmbedding,
    NoEvalUsers,
    NoPositivePairs,
    UnknownSeedId,
)
from .evaluation import (
    MODES,
    build_eval_users,
    evaluate_at_thresholds,
    run_ablation,
)
from .index import IndexBuildConfig, build_index, load_index, save_index
from .recommender import ModelBundle, SeedQuery, recommend
from .scoring import DEFAULT_WEIGHTS, tfidf_fingerprint, tfidf_fit, validate_weights

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TRAINING = 3
EXIT_INFERENCE = 4
EXIT_EVALUATION = 5

_EXIT_BY_ERROR = (
    (NoEvalUsers, EXIT_EVALUATION),
    ((DivergedLoss, NoPositivePairs, DegenerateCorpus), EXIT_TRAINING),
    ((UnknownSeedId, IncompatibleIndex, MissingEmbedding), EXIT_INFERENCE),
)


def _emit_json(obj, path: str | None) -> None:
    text = json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _fingerprint_hex(value: int) -> str:
    return f"0x{value:016x}"


def _file_fnv(path: str | Path) -> str:
    return _fingerprint_hex(fnv1a64(Path(path).read_bytes()))


def _parse_weights(value) -> tuple[float, float, float]:
    if value is None:
        return DEFAULT_WEIGHTS
    if isinstance(value, str):
        parts = [p for p in value.split(",") if p.strip()]
        value = [float(p) for p in parts]
    return validate_weights(value)


def _parse_config_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config JSON must be an object")
    else:
        data = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            raw = raw.strip()
            try:
                data[key.strip()] = json.loads(raw)
            except json.JSONDecodeError:
                data[key.strip()] = raw
    # accept dotted aliases like scoring.weights
    return {key.rsplit(".", 1)[-1].replace("-", "_"): v for key, v in data.items()}


def _build_provider(args) -> EncoderProvider:
    if args.provider == "file":
        if not args.embeddings:
            raise ValueError("--provider file requires --embeddings <path>")
        return FileBackedProvider(args.embeddings)
    return FallbackProvider()


def _load_cleaned_catalog(path: str, fmt: str = "jsonl") -> Catalog:
    catalog, issues = load_catalog(path, fmt)
    if issues:
        log.warning("%s: %d malformed rows skipped", path, len(issues))
    cleaned, _ = clean(catalog)
    return cleaned


def _load_all_ratings(path: str):
    ratings, issues = load_ratings(path)
    if issues:
        log.warning("%s: %d malformed rating rows skipped", path, len(issues))
    return ratings


def cmd_ingest(args) -> int:
    catalog, issues = load_catalog(args.items, args.format)
    cleaned, stats = clean(catalog)
    save_catalog(cleaned, args.out)
    summary = {
        "items_in": stats.items_in,
        "items_out": stats.items_out,
        "dropped_missing": stats.dropped_missing,
        "dropped_duplicate": stats.dropped_duplicate,
        "dropped_duplicate_id": stats.dropped_duplicate_id,
        "dropped_duplicate_title": stats.dropped_duplicate_title,
        "malformed_rows": len(issues),
        "domains": cleaned.domain_counts(),
        "out": args.out,
    }
    _emit_json(summary, args.summary)
    return EXIT_OK


def cmd_train_genres(args) -> int:
    sequences: list[list[str]] = []
    for path in args.items:
        catalog = _load_cleaned_catalog(path)
        sequences.extend(list(item.genres) for item in catalog.items)
    config = GenreTrainConfig(
        dim=args.dim,
        window=args.window,
        negatives=args.negatives,
        epochs=args.epochs,
        lr=args.lr,
        min_n=args.min_n,
        max_n=args.max_n,
        bucket_count=args.buckets,
        seed=args.seed,
    )
    model = train_genre_model(sequences, config)
    save_genre_model(model, args.out)
    _emit_json(
        {
            "out": args.out,
            "vocab_size": len(model.token_vectors),
            "dim": model.dim,
            "seed": args.seed,
            "model_fnv": _file_fnv(args.out),
        },
        args.summary,
    )
    return EXIT_OK


def cmd_train(args) -> int:
    source = _load_cleaned_catalog(args.source)
    target = _load_cleaned_catalog(args.target)
    genre_model = load_genre_model(args.genre_model)
    encoder = _build_provider(args)
    ratings = _load_all_ratings(args.ratings) if args.ratings else None

    sampling = trainer.PairSamplingConfig(
        jaccard_threshold=args.jaccard_threshold,
        negatives_per_positive=args.negatives_per_positive,
        max_positives=args.max_positives,
        seed=args.seed,
    )
    pairs = trainer.sample_pairs(source.items, target.items, ratings, sampling)
    config = trainer.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        base_lr=args.lr,
        margin=args.margin,
        max_grad_norm=args.clip,
        t0=args.t0,
        t_mult=args.t_mult,
        eta_min=args.eta_min,
        seed=args.seed,
    )
    params, report = trainer.train(
        source.items, target.items, encoder, genre_model, pairs, config
    )
    fusion.save_params(params, args.out)
    summary = {
        "checkpoint": args.out,
        "checkpoint_fnv": _file_fnv(args.out),
        "model_fingerprint": _fingerprint_hex(fusion.params_fingerprint(params)),
        "seed": args.seed,
        "report": report.to_dict(),
    }
    _emit_json(summary, args.report)
    return EXIT_OK


def cmd_index(args) -> int:
    target = _load_cleaned_catalog(args.target)
    genre_model = load_genre_model(args.genre_model)
    params = fusion.load_params(args.checkpoint)
    encoder = _build_provider(args)
    tfidf_model = tfidf_fit([item.description for item in target.items])
    config = IndexBuildConfig(batch_size=args.batch_size, parallelism=args.parallelism)
    index = build_index(target, encoder, genre_model, params, tfidf_model, config)
    save_index(index, args.out)
    _emit_json(
        {
            "index": args.out,
            "items": len(index),
            "provider_id": index.provider_id,
            "model_fingerprint": _fingerprint_hex(index.model_fingerprint),
            "tfidf_fingerprint": _fingerprint_hex(index.tfidf_fingerprint),
            "index_fnv": _file_fnv(args.out),
        },
        args.summary,
    )
    return EXIT_OK


def _load_inference_artifacts(args):
    source = _load_cleaned_catalog(args.source)
    target = _load_cleaned_catalog(args.target)
    genre_model = load_genre_model(args.genre_model)
    params = fusion.load_params(args.checkpoint)
    encoder = _build_provider(args)
    tfidf_model = tfidf_fit([item.description for item in target.items])
    index = load_index(args.index)
    models = ModelBundle(
        encoder=encoder, genre_model=genre_model, params=params, tfidf_model=tfidf_model
    )
    log.info(
        "artifacts: model %s tfidf %s provider %s",
        _fingerprint_hex(fusion.params_fingerprint(params)),
        _fingerprint_hex(tfidf_fingerprint(tfidf_model)),
        encoder.provider_id,
    )
    return source, target, index, models


def _render_table(rows: list[dict]) -> str:
    header = f"{'rank':>4}  {'target_id':<20}  {'combined':>9}  {'fusion':>8}  {'genre':>8}  {'tfidf':>8}  title"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row['rank']:>4}  {row['target_id']:<20}  {row['combined']:>9.5f}  "
            f"{row['fusion_sim']:>8.5f}  {row['genre_sim']:>8.5f}  {row['tfidf_sim']:>8.5f}  "
            f"{row['title']}"
        )
    return "\n".join(lines) + "\n"


def cmd_recommend(args) -> int:
    source, target, index, models = _load_inference_artifacts(args)
    weights = _parse_weights(args.weights)
    seed_ids = tuple(s.strip() for s in args.seeds.split(",") if s.strip())
    if not seed_ids:
        raise ValueError("--seeds must name at least one source item id")
    query = SeedQuery(seed_ids=seed_ids, k=args.k)
    recs = recommend(query, source, index, models, weights)
    titles = {item.id: item.title for item in target.items}
    rows = [
        {
            "rank": rec.rank,
            "target_id": rec.target_id,
            "title": titles.get(rec.target_id, ""),
            **rec.breakdown.to_dict(),
        }
        for rec in recs
    ]
    if args.render == "table":
        out = _render_table(rows)
        if args.out:
            Path(args.out).write_text(out, encoding="utf-8")
        else:
            sys.stdout.write(out)
    else:
        _emit_json(rows, args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    source, target, index, models = _load_inference_artifacts(args)
    weights = _parse_weights(args.weights)
    users = build_eval_users(_load_all_ratings(args.ratings))
    report = evaluate_at_thresholds(users, source, index, models, weights)
    report.config_echo = {"weights": list(weights), "ratings": args.ratings}
    _emit_json(report.to_dict(), args.out)
    return EXIT_OK


def cmd_ablate(args) -> int:
    source, target, index, models = _load_inference_artifacts(args)
    weights = _parse_weights(args.weights)
    users = build_eval_users(_load_all_ratings(args.ratings))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {}
    for mode in MODES:
        report = run_ablation(mode, users, source, target, index, models, weights)
        report.config_echo = {"weights": list(weights), "ratings": args.ratings}
        path = out_dir / f"ablation_{mode}.json"
        _emit_json(report.to_dict(), str(path))
        summary[mode] = {
            "report": str(path),
            "mae": {str(p): report.mae[p] for p in report.thresholds},
            "rmse": {str(p): report.rmse[p] for p in report.thresholds},
        }
    _emit_json(summary, None)
    return EXIT_OK


def _add_provider_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--provider", choices=("fallback", "file"), default="fallback",
                   help="text encoder source: hashing fallback or precomputed file")
    p.add_argument("--embeddings", default=None,
                   help="embedding file path (required with --provider file)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossrec",
        description="Cross-domain content recommendations from fused text and genre features.",
    )
    parser.add_argument("--config", default=None,
                        help="JSON or key=value config file; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = sub  # for config-file default injection
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("ingest", formatter_class=fmt, help="validate and clean a catalog")
    p.add_argument("--items", required=True, help="raw catalog path")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--out", required=True, help="cleaned catalog path (jsonl)")
    p.add_argument("--summary", default=None, help="write the summary JSON here instead of stdout")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train-genres", formatter_class=fmt,
                       help="train subword genre embeddings from catalog genre lists")
    p.add_argument("--items", action="append", required=True,
                   help="cleaned catalog path (repeat to cover both domains)")
    p.add_argument("--out", required=True, help="genre model output path")
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--window", type=int, default=2)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--min-n", type=int, default=3)
    p.add_argument("--max-n", type=int, default=6)
    p.add_argument("--buckets", type=int, default=1 << 17)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--summary", default=None, help="write the summary JSON here instead of stdout")
    p.set_defaults(func=cmd_train_genres)

    p = sub.add_parser("train", formatter_class=fmt, help="train the fusion network")
    p.add_argument("--source", required=True, help="cleaned source catalog")
    p.add_argument("--target", required=True, help="cleaned target catalog")
    p.add_argument("--genre-model", required=True)
    p.add_argument("--ratings", default=None, help="optional ratings jsonl for co-like positives")
    p.add_argument("--out", required=True, help="fusion checkpoint output path")
    p.add_argument("--report", default=None, help="write the training report here instead of stdout")
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=2e-5)
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--clip", type=float, default=1.0)
    p.add_argument("--t0", type=int, default=10)
    p.add_argument("--t-mult", type=int, default=2)
    p.add_argument("--eta-min", type=float, default=0.0)
    p.add_argument("--jaccard-threshold", type=float, default=0.25)
    p.add_argument("--negatives-per-positive", type=int, default=1)
    p.add_argument("--max-positives", type=int, default=None,
                   help="cap on positive pairs (sampled without replacement)")
    p.add_argument("--seed", type=int, default=0)
    _add_provider_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("index", formatter_class=fmt, help="precompute the target feature index")
    p.add_argument("--target", required=True, help="cleaned target catalog")
    p.add_argument("--genre-model", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="index output path")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--summary", default=None, help="write the summary JSON here instead of stdout")
    _add_provider_flags(p)
    p.set_defaults(func=cmd_index)

    def add_inference_flags(p):
        p.add_argument("--source", required=True, help="cleaned source catalog")
        p.add_argument("--target", required=True, help="cleaned target catalog")
        p.add_argument("--genre-model", required=True)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--index", required=True)
        p.add_argument("--weights", default=None,
                       help="fusion,genre,tfidf weights; non-negative, sum 1 "
                            "(default: equal thirds)")
        _add_provider_flags(p)

    p = sub.add_parser("recommend", formatter_class=fmt, help="rank targets for seed items")
    add_inference_flags(p)
    p.add_argument("--seeds", required=True, help="comma-separated source item ids (1-3 typical)")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--format", dest="render", choices=("json", "table"), default="json")
    p.add_argument("--out", default=None, help="write output here instead of stdout")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("evaluate", formatter_class=fmt, help="MAE/RMSE at 20/50/80 thresholds")
    add_inference_flags(p)
    p.add_argument("--ratings", required=True)
    p.add_argument("--out", default=None, help="report path (stdout if omitted)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", formatter_class=fmt, help="run all four scoring modes")
    add_inference_flags(p)
    p.add_argument("--ratings", required=True)
    p.add_argument("--out-dir", default=".", help="directory for the four report files")
    p.set_defaults(func=cmd_ablate)

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    # Pre-scan for --config, then install its values as replacement defaults on
    # every subcommand that declares the key. set_defaults swaps the action
    # default itself, so explicit flags still win: defaults < config < flags.
    # Required arguments (file paths) must always be given on the command line.
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config:
        config = _parse_config_file(known.config)
        for sp in parser.subcommands.choices.values():
            dests = {a.dest for a in sp._actions}
            applicable = {k: v for k, v in config.items() if k in dests}
            if applicable:
                sp.set_defaults(**applicable)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except Exception as exc:  # map to documented exit codes
        for types, code in _EXIT_BY_ERROR:
            if isinstance(exc, types):
                print(f"error: {exc}", file=sys.stderr)
                return code
        if isinstance(exc, (CrossRecError, OSError, ValueError, CorruptFile)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        raise


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
