#!/usr/bin/env python3
"""Ten-task streaming comparison on a sine mixture.

Runs all three methods on the same task stream and prints the forgetting
summary: how much each method's task-1 NLPD degrades by the time task 10 has
been learned, and the mean NLPD over all tasks at the end. Writes the full
report JSON/CSV per method under --out.
"""

import argparse
import os

from hippogp.experiment import ExperimentConfig, run_experiment

METHODS = ("ohsgpr", "osgpr-resample", "ovc-pivchol")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/memory_retention")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--n-rff", type=int, default=4000)
    args = ap.parse_args()

    params = {
        "n_points": 1000,
        "amplitudes": [1.0, 0.5],
        "frequencies": [1.5, 4.0],
        "noise_std": 0.1,
        "span": 1.0,
    }
    print(f"{'method':16s} {'nlpd(1,1)':>10s} {'nlpd(1,10)':>11s} {'forgetting':>11s} {'mean@10':>9s}")
    for method in METHODS:
        cfg = ExperimentConfig(
            synthetic="sine-mix",
            synthetic_params=params,
            n_tasks=10,
            method=method,
            M=20,
            n_rff=args.n_rff,
            seed=args.seed,
        )
        out_dir = os.path.join(args.out, method)
        report = run_experiment(cfg, out_dir=out_dir)
        first = report.cell(1, 1)["nlpd"]
        last = report.cell(1, 10)["nlpd"]
        mean10 = sum(r["nlpd"] for r in report.metrics if r["after_task"] == 10) / 10
        print(f"{method:16s} {first:>10.3f} {last:>11.3f} {last - first:>11.3f} {mean10:>9.3f}")
    print(f"reports under {args.out}/<method>/")


if __name__ == "__main__":
    main()
