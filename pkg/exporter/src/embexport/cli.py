"""Command line front end: `embexport export --catalog items.jsonl --out vecs.bin`."""

import argparse
import logging
import sys

from .exporter import (
    DEFAULT_MODEL,
    DuplicateId,
    ExportError,
    ModelLoadError,
    export_embeddings,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MODEL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="Export transformer embeddings for a catalog to a binary file.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="encode catalog descriptions and write the file")
    p.add_argument("--catalog", required=True, help="catalog JSONL (id + description per line)")
    p.add_argument("--out", required=True, help="embedding file output path")
    p.add_argument("--model", default=DEFAULT_MODEL,
                   help="model name or local checkpoint directory")
    p.add_argument("--batch", type=int, default=32, help="encoder batch size")
    p.set_defaults(func=cmd_export)
    return parser


def cmd_export(args) -> int:
    manifest = export_embeddings(
        args.catalog, args.out, batch_size=args.batch, model_name=args.model
    )
    sys.stdout.write(manifest.to_json())
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (DuplicateId, ExportError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
