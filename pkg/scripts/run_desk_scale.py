#!/usr/bin/env python3
"""Run the frozen desk-scale experiment end to end and print the report.

Usage: python scripts/run_desk_scale.py [--out DIR] [--seed N]
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir, "src"))

from feeder_nilm import cli
from feeder_nilm.storage import read_report_lines

CONFIG = os.path.join(os.path.dirname(__file__), os.pardir, "configs", "desk_scale.cfg")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/desk_scale")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    argv = ["pipeline", "--config", CONFIG, "--out", args.out]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    rc = cli.main(argv)
    if rc != 0:
        return rc

    entries, _ = read_report_lines(os.path.join(args.out, "report.txt"))
    values = dict(entries)
    print()
    print(f"report: {os.path.join(args.out, 'report.txt')}")
    print(f"  test windows          {values['n_test_windows']}")
    print(f"  rounded MAE           {float(values['mae_rounded']):.4f}")
    print(f"  continuous MAE        {float(values['mae_continuous']):.4f}")
    print(f"  exact-count accuracy  {float(values['exact_count_accuracy']):.1%}")
    print(f"  median baseline MAE   {float(values['baseline_mae_rounded']):.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
