"""Command-line entry: gen-dataset, pretrain, run-case, report.

Exit codes: 0 success (run-case: accepted), 2 run-case finished without meeting
epsilon (best-so-far written), 1 any error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .commands import EXIT_ERROR, EXIT_OK, gen_dataset_cmd, pretrain_cmd, report_cmd, run_case
from .config import RunConfig


def build_parser():
    parser = argparse.ArgumentParser(prog="svpen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-dataset", "pretrain", "run-case"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--max-iters", type=int)
        p.add_argument("--out", help="output directory (overrides [files] out_dir)")
    p = sub.add_parser("report")
    p.add_argument("traces", nargs="*", help="trace.csv files")
    p.add_argument("--config", help="optional; its out_dir is used when --out is absent")
    p.add_argument("--out")
    p.add_argument("--every", type=int, default=1, help="print every n-th row")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "report":
            out = args.out or (RunConfig.load(args.config).files.get("out_dir") if args.config else None)
            reports = report_cmd(args.traces, out, args.every)
            for path, info in reports.items():
                print(f"{path}: {info['rows']} rows, best e {info.get('best_e', float('nan')):.6g}")
            return EXIT_OK
        config = RunConfig.load(args.config).with_overrides(args.seed, args.epsilon, args.max_iters, args.out)
        if args.command == "gen-dataset":
            print(json.dumps(gen_dataset_cmd(config), indent=2))
            return EXIT_OK
        if args.command == "pretrain":
            info = pretrain_cmd(config)
            info.pop("history", None)
            print(json.dumps(info, indent=2))
            return EXIT_OK
        summary, _ = run_case(config)
        print(json.dumps(summary.__dict__, indent=2, sort_keys=True))
        return summary.exit_code()
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
