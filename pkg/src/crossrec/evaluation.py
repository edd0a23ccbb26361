"""Rating-prediction evaluation and the four-mode ablation.

Users who liked (rated >= 4) at least one source item and one target item are
kept. Each user's liked sources seed the recommender; combined scores over the
whole index are min-max mapped onto the 1-5 rating scale, and MAE/RMSE are
aggregated over the top 20/50/80 percent of each user's liked targets, ranked
by predicted score.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .catalog import Catalog, Rating
from .errors import EmptyInput, IncompatibleIndex, LengthMismatch, NoEvalUsers
from .index import FeatureIndex
from .recommender import (
    ModelBundle,
    SeedQuery,
    cosine_to_rows,
    build_seed_features,
    recommend,
    score_index,
)
from .scoring import DEFAULT_WEIGHTS, sparse_cosine, validate_weights

log = logging.getLogger(__name__)

LIKE_THRESHOLD = 4.0
DEFAULT_THRESHOLDS = (20, 50, 80)
MODES = ("fused", "text_only", "genre_only", "tfidf_only")


@dataclass(frozen=True)
class EvalUser:
    user_id: str
    liked_sources: frozenset[str]
    liked_targets: dict[str, float]


@dataclass
class EvalReport:
    mode: str
    mae: dict[int, float]
    rmse: dict[int, float]
    user_count: int
    pair_count: int
    thresholds: tuple[int, ...] = DEFAULT_THRESHOLDS
    config_echo: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "thresholds": list(self.thresholds),
            "mae": {str(p): self.mae[p] for p in self.thresholds},
            "rmse": {str(p): self.rmse[p] for p in self.thresholds},
            "user_count": self.user_count,
            "pair_count": self.pair_count,
            "config_echo": self.config_echo,
        }


def build_eval_users(ratings: list[Rating]) -> list[EvalUser]:
    """Group ratings by user, keep only liked items, and keep only users with
    at least one liked item on each side."""
    if not ratings:
        raise NoEvalUsers("no ratings supplied")
    sources: dict[str, set[str]] = {}
    targets: dict[str, dict[str, float]] = {}
    for r in ratings:
        if r.rating < LIKE_THRESHOLD:
            continue
        if r.domain == "source":
            sources.setdefault(r.user_id, set()).add(r.item_id)
        else:
            targets.setdefault(r.user_id, {})[r.item_id] = float(r.rating)
    users = [
        EvalUser(
            user_id=uid,
            liked_sources=frozenset(sources[uid]),
            liked_targets=dict(sorted(targets[uid].items())),
        )
        for uid in sorted(sources.keys() & targets.keys())
    ]
    if not users:
        raise NoEvalUsers(
            "no user has at least one liked item in each domain (rating >= 4)"
        )
    return users


def predictions_from_scores(
    item_ids: list[str], combined: np.ndarray
) -> dict[str, float]:
    """Min-max map combined scores onto [1, 5]; a constant score vector is
    uninformative and maps everything to the scale midpoint 3.0."""
    lo = float(combined.min())
    hi = float(combined.max())
    if hi == lo:
        return {item_id: 3.0 for item_id in item_ids}
    scale = 4.0 / (hi - lo)
    return {
        item_id: 1.0 + scale * (float(s) - lo) for item_id, s in zip(item_ids, combined)
    }


def predict_ratings(
    user: EvalUser,
    source_catalog: Catalog,
    index: FeatureIndex,
    models: ModelBundle,
    weights=DEFAULT_WEIGHTS,
) -> dict[str, float]:
    """Predicted rating for every indexed target, seeded by the user's liked
    sources, via the full recommendation path."""
    seeds = tuple(sorted(user.liked_sources))
    recs = recommend(
        SeedQuery(seed_ids=seeds, k=len(index)), source_catalog, index, models, weights
    )
    ids = [rec.target_id for rec in recs]
    combined = np.array([rec.breakdown.combined for rec in recs])
    return predictions_from_scores(ids, combined)


def mae_rmse(preds: list[float], truths: list[float]) -> tuple[float, float]:
    if len(preds) != len(truths):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(truths)} truths")
    if not preds:
        raise EmptyInput("cannot compute error metrics over zero pairs")
    diff = np.asarray(preds, dtype=np.float64) - np.asarray(truths, dtype=np.float64)
    mae = float(np.mean(np.abs(diff)))
    rmse = float(math.sqrt(np.mean(diff * diff)))
    return mae, rmse


def _threshold_count(p: int, n: int) -> int:
    # ceil(p% of n) in exact integer arithmetic
    return (p * n + 99) // 100


def _validate_thresholds(thresholds) -> tuple[int, ...]:
    ts = tuple(int(p) for p in thresholds)
    if not ts or any(not 0 < p <= 100 for p in ts) or list(ts) != sorted(ts):
        raise ValueError(f"thresholds must be ascending percentages in (0,100]: {ts}")
    return ts


def _aggregate(
    users: list[EvalUser],
    source_catalog: Catalog,
    predict,  # (seed id tuple) -> {target_id: predicted rating}
    thresholds: tuple[int, ...],
    mode: str,
) -> EvalReport:
    src_ids = set(source_catalog.by_id())
    per_threshold: dict[int, tuple[list[float], list[float]]] = {
        p: ([], []) for p in thresholds
    }
    user_count = 0
    pair_count = 0
    for user in users:
        seeds = tuple(sorted(s for s in user.liked_sources if s in src_ids))
        if not seeds:
            log.debug("user %s skipped: no liked source resolves", user.user_id)
            continue
        preds = predict(seeds)
        rankable = [
            (tid, truth) for tid, truth in user.liked_targets.items() if tid in preds
        ]
        if not rankable:
            log.debug("user %s skipped: no liked target is indexed", user.user_id)
            continue
        rankable.sort(key=lambda pair: (-preds[pair[0]], pair[0]))
        user_count += 1
        pair_count += len(rankable)
        for p in thresholds:
            take = _threshold_count(p, len(rankable))
            ps, ts = per_threshold[p]
            for tid, truth in rankable[:take]:
                ps.append(preds[tid])
                ts.append(truth)
    if user_count == 0:
        raise NoEvalUsers("no user could be evaluated against the index")
    mae = {}
    rmse = {}
    for p in thresholds:
        mae[p], rmse[p] = mae_rmse(*per_threshold[p])
    return EvalReport(
        mode=mode,
        mae=mae,
        rmse=rmse,
        user_count=user_count,
        pair_count=pair_count,
        thresholds=thresholds,
    )


def evaluate_at_thresholds(
    users: list[EvalUser],
    source_catalog: Catalog,
    index: FeatureIndex,
    models: ModelBundle,
    weights=DEFAULT_WEIGHTS,
    thresholds=DEFAULT_THRESHOLDS,
) -> EvalReport:
    """Full fused-pipeline evaluation at the given percentile thresholds."""
    if not users:
        raise NoEvalUsers("empty user list")
    ws = validate_weights(weights)
    ts = _validate_thresholds(thresholds)

    def predict(seeds: tuple[str, ...]) -> dict[str, float]:
        user = EvalUser(user_id="", liked_sources=frozenset(seeds), liked_targets={})
        return predict_ratings(user, source_catalog, index, models, ws)

    return _aggregate(users, source_catalog, predict, ts, mode="fused")


def _raw_target_matrix(
    target_catalog: Catalog, index: FeatureIndex, models: ModelBundle
) -> np.ndarray:
    by_id = target_catalog.by_id()
    missing = [tid for tid in index.item_ids if tid not in by_id]
    if missing:
        raise IncompatibleIndex(
            f"index ids missing from target catalog: {', '.join(missing[:5])}"
        )
    rows = [
        np.asarray(models.encoder.encode(by_id[tid]), dtype=np.float64)
        for tid in index.item_ids
    ]
    return np.stack(rows)


def run_ablation(
    mode: str,
    users: list[EvalUser],
    source_catalog: Catalog,
    target_catalog: Catalog,
    index: FeatureIndex,
    models: ModelBundle,
    weights=DEFAULT_WEIGHTS,
    thresholds=DEFAULT_THRESHOLDS,
) -> EvalReport:
    """Evaluate one scoring mode.

    fused uses the configured three-signal combination. text_only swaps in the
    cosine of raw encoder embeddings (no fusion network). genre_only and
    tfidf_only use the corresponding single signal from the index.
    """
    if mode not in MODES:
        raise ValueError(f"unknown ablation mode {mode!r}; expected one of {MODES}")
    if not users:
        raise NoEvalUsers("empty user list")
    ts = _validate_thresholds(thresholds)
    if mode == "fused":
        report = evaluate_at_thresholds(
            users, source_catalog, index, models, weights, ts
        )
        report.mode = "fused"
        return report

    raw_targets = (
        _raw_target_matrix(target_catalog, index, models) if mode == "text_only" else None
    )

    def predict(seeds: tuple[str, ...]) -> dict[str, float]:
        seed = build_seed_features(seeds, source_catalog, models)
        if mode == "text_only":
            combined = cosine_to_rows(seed.raw_text, raw_targets)
        elif mode == "genre_only":
            combined = cosine_to_rows(seed.genre, index.genre)
        else:  # tfidf_only
            combined = np.array(
                [sparse_cosine(seed.tfidf, row) for row in index.tfidf_rows]
            )
        return predictions_from_scores(index.item_ids, combined)

    return _aggregate(users, source_catalog, predict, ts, mode=mode)
