"""`soy-convert` command line: model, table, iuv."""

from __future__ import annotations

import argparse
import sys

from .iuv import iuv_to_dcm
from .official import BadFieldError, MissingFieldError, convert_model
from .smf import SmfFormatError
from .uvtable import ChartDataError, build_table


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="soy-convert", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_model = sub.add_parser("model", help="official release archive (.pkl) -> SMF")
    p_model.add_argument("input")
    p_model.add_argument("output")
    p_model.add_argument("--num-betas", type=int, default=10)
    p_model.add_argument(
        "--priors",
        default=None,
        help="npz with shape/pose prior mean+cov; default: standard-normal "
        "shape prior and 0.5^2 I pose prior",
    )

    p_table = sub.add_parser("table", help="UV chart data (.npz) -> lookup table")
    p_table.add_argument("chart")
    p_table.add_argument("output")
    p_table.add_argument("--resolution", type=int, default=256)

    p_iuv = sub.add_parser("iuv", help="IUV image + lookup table -> DCM")
    p_iuv.add_argument("input")
    p_iuv.add_argument("table")
    p_iuv.add_argument("output")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "model":
            manifest = convert_model(
                args.input, args.output, num_betas=args.num_betas, priors_path=args.priors
            )
            for name, digest in manifest.items():
                print(f"{name} {digest}")
        elif args.command == "table":
            stats = build_table(args.chart, args.output, resolution=args.resolution)
            print(
                f"table written: {stats['covered_directly']}/{stats['cells']} cells covered "
                f"directly; source sha256 {stats['source_sha256']}"
            )
        else:
            stats = iuv_to_dcm(args.input, args.table, args.output)
            print(f"{stats['records']} records written", end="")
            if stats["skipped"]:
                print(f"; {stats['skipped']} pixels skipped (part index out of range)", end="")
            print()
    except (MissingFieldError, BadFieldError, ChartDataError, SmfFormatError) as exc:
        print(f"soy-convert: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"soy-convert: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
