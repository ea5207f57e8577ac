"""Command-line surface: fit, select, experiment, rate-sweep.

Exit codes: 0 success, 2 usage/input error, 3 numerical failure.  All
outputs are JSON/CSV and deterministic given the flags and seed.
"""

from __future__ import annotations

import argparse
import json
import sys

from .balancing import (
    BoundConstants,
    LambdaGrid,
    SelectionRule,
    select_lambda,
)
from .data import GaussianPairSpec, dataset_sha256, load_two_csv, sample_pair
from .errors import InputError, NumericalError
from .experiment import (
    ExperimentConfig,
    rate_sweep_csv_rows,
    run_experiment,
    run_rate_sweep,
    write_experiment_outputs,
)
from .kernel import KernelFamily, KernelSpec
from .losses import LossFamily
from .solver import FitOptions, fit, model_to_dict

_KERNELS = {"one-plus-gaussian": KernelFamily.ONE_PLUS_GAUSSIAN, "gaussian": KernelFamily.GAUSSIAN}


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--p-csv", help="CSV of numerator samples (header x_1,...,x_d)")
    parser.add_argument("--q-csv", help="CSV of denominator samples")
    parser.add_argument("--synthetic", action="store_true", help="sample a synthetic Gaussian pair")
    parser.add_argument("--mu-p", type=float, default=4.0)
    parser.add_argument("--sigma-p", type=float, default=2.0**-0.5)
    parser.add_argument("--mu-q", type=float, default=2.0)
    parser.add_argument("--sigma-q", type=float, default=5.0**0.5)
    parser.add_argument("--m", type=int, default=100, help="numerator sample count")
    parser.add_argument("--n", type=int, default=100, help="denominator sample count")
    parser.add_argument("--seed", type=int, default=0)


def _dataset_from_args(args):
    if args.synthetic:
        pair = GaussianPairSpec(args.mu_p, args.sigma_p, args.mu_q, args.sigma_q)
        return sample_pair(pair, args.m, args.n, args.seed), args.seed
    if not (args.p_csv and args.q_csv):
        raise InputError("provide --p-csv and --q-csv, or --synthetic")
    return load_two_csv(args.p_csv, args.q_csv), None


def _kernel_from_args(args) -> KernelSpec:
    return KernelSpec(_KERNELS[args.kernel], args.bandwidth)


def _parse_grid(text: str) -> LambdaGrid:
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError(f"--grid expects lo:ratio:count, got {text!r}")
    try:
        first, ratio, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise InputError(f"--grid expects numbers lo:ratio:count, got {text!r}") from exc
    return LambdaGrid.from_first(first, ratio, count)


def _data_config(args, seed) -> dict:
    if args.synthetic:
        return {
            "synthetic": True,
            "mu_p": args.mu_p,
            "sigma_p": args.sigma_p,
            "mu_q": args.mu_q,
            "sigma_q": args.sigma_q,
            "m": args.m,
            "n": args.n,
            "seed": seed,
        }
    return {"synthetic": False, "p_csv": args.p_csv, "q_csv": args.q_csv, "seed": seed}


def cmd_fit(args) -> int:
    dataset, seed = _dataset_from_args(args)
    family = LossFamily(args.loss)
    model, report = fit(
        family,
        _kernel_from_args(args),
        dataset,
        args.lam,
        FitOptions(method=args.method, max_iters=args.max_iters),
    )
    doc = model_to_dict(model, seed=seed, dataset_hash=dataset_sha256(dataset))
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(json.dumps(report.to_dict(), indent=2))
    if not report.converged:
        print(f"fit did not converge (grad_norm={report.grad_norm})", file=sys.stderr)
        return 3
    return 0


def cmd_select(args) -> int:
    dataset, seed = _dataset_from_args(args)
    family = LossFamily(args.loss)
    grid = _parse_grid(args.grid)
    rule = SelectionRule(args.rule)
    consts = BoundConstants(delta=args.delta, q0=args.q0, capacity_alpha=args.capacity_alpha)
    report = select_lambda(dataset, family, _kernel_from_args(args), grid, rule, consts)
    if args.out:
        doc = {
            "config": {
                "data": _data_config(args, seed),
                "loss": family.value,
                "kernel": args.kernel,
                "bandwidth": args.bandwidth,
            }
        }
        doc.update(report.to_dict())
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    print(repr(float(report.chosen_lambda)))
    return 0


def cmd_experiment(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    report = run_experiment(config)
    report_path, csv_path = write_experiment_outputs(report, config.output_dir)
    print(json.dumps({"report": report_path, "csv": csv_path}))
    return 0


def cmd_rate_sweep(args) -> int:
    family = LossFamily(args.loss)
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    result = run_rate_sweep(
        family,
        sizes,
        args.seeds,
        SelectionRule(args.selection),
        grid=_parse_grid(args.grid),
    )
    if args.out_csv:
        with open(args.out_csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(rate_sweep_csv_rows(result)) + "\n")
    summary = {
        "config": {
            "loss": args.loss,
            "sizes": sizes,
            "seeds": args.seeds,
            "selection": args.selection,
            "grid": args.grid,
        },
        "slope": result["slope"],
    }
    if args.r is not None and args.capacity_alpha is not None:
        from .balancing import rate_exponent

        summary["theoretical_exponent"] = rate_exponent(args.r, args.capacity_alpha)
    summary["median_error"] = dict(zip(map(str, result["sizes"]), result["median_error"]))
    print(json.dumps(summary, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelratio",
        description="Kernel density-ratio estimation with balancing-principle lambda selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one model at a fixed lambda")
    _add_data_flags(p_fit)
    p_fit.add_argument("--loss", required=True, choices=[f.value for f in LossFamily])
    p_fit.add_argument("--kernel", choices=sorted(_KERNELS), default="one-plus-gaussian")
    p_fit.add_argument("--bandwidth", type=float, default=1.0)
    p_fit.add_argument("--lambda", dest="lam", type=float, required=True)
    p_fit.add_argument("--method", choices=["auto", "cg", "closed_form"], default="auto")
    p_fit.add_argument("--max-iters", type=int, default=5000)
    p_fit.add_argument("--out", required=True, help="model JSON output path")
    p_fit.set_defaults(func=cmd_fit)

    p_sel = sub.add_parser("select", help="choose lambda on a geometric grid")
    _add_data_flags(p_sel)
    p_sel.add_argument("--loss", required=True, choices=[f.value for f in LossFamily])
    p_sel.add_argument("--kernel", choices=sorted(_KERNELS), default="one-plus-gaussian")
    p_sel.add_argument("--bandwidth", type=float, default=1.0)
    p_sel.add_argument(
        "--grid", required=True, help="lo:ratio:count; geometric grid whose smallest value is lo"
    )
    p_sel.add_argument("--rule", choices=["mj", "eta-s"], default="mj")
    p_sel.add_argument("--delta", type=float, default=0.05)
    p_sel.add_argument("--q0", type=float, default=1.0)
    p_sel.add_argument("--capacity-alpha", type=float, default=1.0)
    p_sel.add_argument("--out", help="selection report JSON output path")
    p_sel.set_defaults(func=cmd_select)

    p_exp = sub.add_parser("experiment", help="run a seeded grid experiment from a config JSON")
    p_exp.add_argument("config", help="experiment config JSON path")
    p_exp.set_defaults(func=cmd_experiment)

    p_rate = sub.add_parser("rate-sweep", help="median error versus sample size")
    p_rate.add_argument("--loss", required=True, choices=[f.value for f in LossFamily])
    p_rate.add_argument("--sizes", required=True, help="comma-separated pooled sizes, e.g. 32,64,128")
    p_rate.add_argument("--seeds", type=int, default=21, help="number of seeds (0..k-1)")
    p_rate.add_argument("--selection", choices=["mj", "eta-s"], default="mj")
    p_rate.add_argument("--grid", default="1e-3:10:5")
    p_rate.add_argument("--r", type=float, help="source regularity for the printed exponent")
    p_rate.add_argument("--capacity-alpha", type=float, help="capacity index for the printed exponent")
    p_rate.add_argument("--out-csv", help="CSV output path (N,median_error)")
    p_rate.set_defaults(func=cmd_rate_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
