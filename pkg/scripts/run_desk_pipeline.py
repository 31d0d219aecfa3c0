#!/usr/bin/env python3
"""Full desk-scale pipeline: data -> codec -> flow -> predictions -> reports.

Runs every stage through the CLI so each artifact directory is reproducible
from its manifest/sidecar. ``--quick`` shrinks everything for a smoke run.
"""

import argparse
import sys
from pathlib import Path

from changeflow.cli import main as cli


def run(argv):
    code = cli(argv)
    if code != 0:
        print(f"stage failed: {' '.join(map(str, argv))}", file=sys.stderr)
        sys.exit(code)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("artifacts/desk"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--quick", action="store_true",
                        help="tiny sizes for a fast smoke run")
    args = parser.parse_args()

    out = args.out
    seed = str(args.seed)
    count = "200" if args.quick else "2000"
    epochs = ["--epochs", "2"] if args.quick else []
    codec_epochs = ["--codec-epochs", "2"] if args.quick else []
    bench_budget = ["--timed-runs", "5", "--warmup", "2", "--eval-limit", "5"] if args.quick \
        else ["--eval-limit", "100"]

    run(["gen-data", "--seed", seed, "--out", str(out / "data"), "--count", count])
    run(["train-codec", "--seed", seed, "--data", str(out / "data"),
         "--out", str(out / "codec"), *codec_epochs])
    run(["train", "--seed", seed, "--data", str(out / "data"),
         "--codec", str(out / "codec" / "codec.ckpt"), "--out", str(out / "run"), *epochs])
    ckpt = str(out / "run" / "flow.ckpt")
    run(["infer", "--seed", seed, "--checkpoint", ckpt, "--data", str(out / "data"),
         "--split", "test", "--out", str(out / "pred"), "--trace",
         *(["--limit", "5"] if args.quick else [])])
    run(["eval", "--pred", str(out / "pred"), "--gt-data", str(out / "data"),
         "--split", "test", "--out", str(out / "eval")])
    run(["sweep", "--seed", seed, "--checkpoint", ckpt, "--data", str(out / "data"),
         "--split", "val", "--out", str(out / "sweep"),
         *(["--limit", "5"] if args.quick else [])])
    run(["bench", "--seed", seed, "--checkpoint", ckpt, "--data", str(out / "data"),
         "--out", str(out / "bench"), *bench_budget])
    print(f"pipeline complete; reports under {out}")


if __name__ == "__main__":
    main()
