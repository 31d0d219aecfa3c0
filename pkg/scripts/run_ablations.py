#!/usr/bin/env python3
"""Design-choice ablation harness: conditioning, normalization, t-sampling, resize.

Trains one model per variant on identical data and seeds, evaluates each on
the validation split, and leaves one CSV per axis. Meant to run on an
existing dataset + codec (see run_desk_pipeline.py).
"""

import argparse
import sys
from pathlib import Path

from changeflow.cli import main as cli

AXES = ("diff", "norm", "tsample", "resize")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", type=Path, required=True)
    parser.add_argument("--codec", type=Path, required=True)
    parser.add_argument("--out", type=Path, default=Path("artifacts/ablations"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=12,
                        help="reduced schedule; ablations compare variants, not absolutes")
    parser.add_argument("--eval-limit", type=int, default=100)
    parser.add_argument("--axes", nargs="+", choices=AXES, default=list(AXES))
    args = parser.parse_args()

    for axis in args.axes:
        code = cli([
            "ablate", "--seed", str(args.seed), "--data", str(args.data),
            "--codec", str(args.codec), "--out", str(args.out / axis),
            "--axis", axis, "--epochs", str(args.epochs),
            "--eval-limit", str(args.eval_limit),
        ])
        if code != 0:
            print(f"ablation axis {axis} failed", file=sys.stderr)
            sys.exit(code)
    print(f"ablation tables under {args.out}")


if __name__ == "__main__":
    main()
