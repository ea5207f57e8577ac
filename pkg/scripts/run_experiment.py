#!/usr/bin/env python3
"""Run the default benchmark: both losses, three sample sizes, 50 seeds.

Writes report.json and results.csv (long format, one row per lambda per
cell) into the output directory, then prints a per-size summary of how
often the balancing rule picked one of the two best grid values by
oracle MSE.
"""

import argparse
import collections

import numpy as np

from kernelratio.experiment import ExperimentConfig, run_experiment, write_experiment_outputs


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="experiment_out", help="output directory")
    parser.add_argument("--seeds", type=int, default=50, help="number of seeds (0..k-1)")
    parser.add_argument("--rule", choices=["mj", "eta-s"], default="mj")
    args = parser.parse_args()

    config = ExperimentConfig.from_dict(
        {"seeds": list(range(args.seeds)), "rule": args.rule, "output_dir": args.out}
    )
    report = run_experiment(config)
    report_path, csv_path = write_experiment_outputs(report, config.output_dir)
    print(f"report: {report_path}\ncsv:    {csv_path}\n")

    for loss in sorted({c["loss"] for c in report["cells"]}):
        for m, n in sorted({(c["m"], c["n"]) for c in report["cells"]}):
            cells = [c for c in report["cells"] if c["loss"] == loss and (c["m"], c["n"]) == (m, n)]
            top2 = np.mean([c["chosen_rank_by_mse"] <= 2 for c in cells])
            histogram = collections.Counter(c["chosen_lambda"] for c in cells)
            chosen = ", ".join(f"{lam:g}x{count}" for lam, count in sorted(histogram.items()))
            print(f"{loss:7s} m=n={m:<4d} top-2 rate {top2:5.2f}   chosen: {chosen}")


if __name__ == "__main__":
    main()
