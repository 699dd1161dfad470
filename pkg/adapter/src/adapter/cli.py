"""Entry point: `adapter serve` speaks the wire protocol until EOF."""

from __future__ import annotations

import argparse
import sys

from adapter.protocol import serve
from adapter.training import AdapterConfig, SwaMode


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adapter",
        description="Serve a small training objective over stdin/stdout.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    serve_p = sub.add_parser("serve", help="answer evaluation requests until EOF")
    serve_p.add_argument("--seed", type=int, default=0, help="training init/shuffle seed")
    serve_p.add_argument("--max-epochs", type=int, default=10)
    serve_p.add_argument("--patience", type=int, default=3)
    serve_p.add_argument("--swa", default="off", help="'off' or 'last_<k>' (k >= 2)")
    serve_p.add_argument("--holdout", type=float, default=0.1,
                         help="validation holdout fraction")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = AdapterConfig(
            seed=args.seed,
            max_epochs=args.max_epochs,
            patience=args.patience,
            swa=SwaMode.parse(args.swa),
            holdout_fraction=args.holdout,
        )
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return serve(cfg)


if __name__ == "__main__":
    sys.exit(main())
