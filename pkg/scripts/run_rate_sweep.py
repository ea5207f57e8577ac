#!/usr/bin/env python3
"""Median estimation error versus pooled sample size at the selected lambda.

Prints the medians, the fitted log-log slope, and (for reference) the
theoretical rate exponent at a chosen regularity/capacity point.
"""

import argparse

from kernelratio.balancing import SelectionRule, rate_exponent
from kernelratio.experiment import run_rate_sweep
from kernelratio.losses import LossFamily


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--loss", default="kulsif", choices=[f.value for f in LossFamily])
    parser.add_argument("--sizes", default="32,64,128,256,512")
    parser.add_argument("--seeds", type=int, default=21)
    parser.add_argument("--rule", choices=["mj", "eta-s"], default="mj")
    parser.add_argument("--r", type=float, default=0.5)
    parser.add_argument("--capacity-alpha", type=float, default=1.0)
    args = parser.parse_args()

    sizes = [int(s) for s in args.sizes.split(",")]
    result = run_rate_sweep(LossFamily(args.loss), sizes, args.seeds, SelectionRule(args.rule))
    for size, err in zip(result["sizes"], result["median_error"]):
        print(f"N={size:<6d} median_error={err:.6e}")
    print(f"log-log slope: {result['slope']:+.3f}")
    exponent = rate_exponent(args.r, args.capacity_alpha)
    print(f"reference exponent at (r={args.r}, alpha={args.capacity_alpha}): -{exponent:.4f}")


if __name__ == "__main__":
    main()
