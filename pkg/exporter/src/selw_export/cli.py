"""Command-line entry point: ``selw-export export``."""

from __future__ import annotations

import argparse
import sys

from .archs import ARCH_IDS
from .errors import ExportError
from .export import export_checkpoint


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selw-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="convert a torch checkpoint to SELW + manifest")
    p.add_argument("--checkpoint", required=True, help="path to a torch state-dict checkpoint")
    p.add_argument("--arch", required=True, choices=ARCH_IDS, help="source architecture")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--fixture", type=int, default=0, metavar="N",
                   help="also write a parity fixture with N input/logit pairs")
    p.add_argument("--seed", type=int, default=0, help="fixture input seed (default 0)")
    p.add_argument("--labels", default=None,
                   help="comma-separated class labels (default: class_0..class_{K-1})")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    labels = [s.strip() for s in args.labels.split(",")] if args.labels else None
    try:
        report = export_checkpoint(
            args.checkpoint,
            args.arch,
            args.out,
            class_labels=labels,
            fixture_inputs=args.fixture,
            fixture_seed=args.seed,
        )
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(report.summary())
    return 0


if __name__ == "__main__":
    sys.exit(main())
