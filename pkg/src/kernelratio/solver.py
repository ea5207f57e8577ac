"""Coefficient optimization for the regularized empirical risk objective.

The model is the kernel expansion f = sum_j alpha_j k(x_j, .) over the
pooled training points.  With margins f = K alpha, the objective is

    J(alpha) = (1/N) sum_i ell(y_i, f_i) + (lambda/2) alpha^T K alpha,

whose gradient is K (d/N + lambda alpha) with d_i = ell'(y_i, f_i).

Two solve paths:

* nonlinear conjugate gradient (Polak-Ribiere+ with restarts, Armijo
  backtracking) from alpha = 0, for any loss family;
* a direct linear solve for the families quadratic in the margin
  (kulsif, sq), which doubles as an oracle for the iterative path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import InputError, NumericalError
from .kernel import GramMatrix, KernelFamily, KernelSpec, as_points, cross_matrix, gram_matrix
from .losses import (
    LossFamily,
    QUADRATIC_FAMILIES,
    loss_d1,
    loss_d2,
    loss_value,
    loss_value_delta,
    ratio_map,
)

# Cap on broadcast buffer entries when evaluating margins on large grids.
_CHUNK_ENTRIES = 4_000_000


@dataclass(frozen=True)
class RatioModel:
    """Fitted ratio estimator: kernel, training points, coefficients."""

    kernel: KernelSpec
    points: np.ndarray
    alpha: np.ndarray
    lam: float
    family: LossFamily

    def __post_init__(self) -> None:
        pts = as_points(self.points)
        alpha = np.asarray(self.alpha, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "alpha", alpha)
        if alpha.shape[0] != pts.shape[0]:
            raise InputError(f"alpha length {alpha.shape[0]} != {pts.shape[0]} points")
        if not (self.lam > 0.0 and np.isfinite(self.lam)):
            raise InputError(f"lambda must be positive, got {self.lam}")


@dataclass(frozen=True)
class FitReport:
    iterations: int
    grad_norm: float
    objective: float
    converged: bool
    method: str  # "NonlinearCG" | "ClosedForm"

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "objective": self.objective,
            "converged": self.converged,
            "method": self.method,
        }


@dataclass(frozen=True)
class FitOptions:
    method: str = "auto"  # "auto" | "cg" | "closed_form"
    tol_grad: float | None = None  # default 1e-8 * N
    max_iters: int = 5000
    armijo_c: float = 1e-4
    max_halvings: int = 60


def _gram_values(gram) -> np.ndarray:
    return gram.values if isinstance(gram, GramMatrix) else np.asarray(gram, dtype=np.float64)


def objective_and_gradient(family: LossFamily, gram, ys, alpha, lam: float):
    """Objective value and gradient at alpha; margins are K alpha."""
    K = _gram_values(gram)
    ys = np.asarray(ys, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    n_total = ys.shape[0]
    margins = K @ alpha
    value = float(np.mean(loss_value(family, ys, margins)) + 0.5 * lam * (alpha @ margins))
    grad = K @ (loss_d1(family, ys, margins) / n_total + lam * alpha)
    return value, grad


def closed_form_fit(family: LossFamily, gram, ys, lam: float) -> np.ndarray:
    """Direct linear solve for the margin-quadratic families.

    kulsif: ((1/N) D K + lambda I) alpha = b / N with D = diag((1-y)/2)
    and b = (1+y)/2; the system is non-symmetric, solved by LU.
    sq: ((2/N) K + lambda I) alpha = (2/N) y.
    """
    if family not in QUADRATIC_FAMILIES:
        raise InputError(f"no closed form for {family.value}; use the CG path")
    K = _gram_values(gram)
    ys = np.asarray(ys, dtype=np.float64)
    n_total = ys.shape[0]
    eye = np.eye(n_total)
    if family is LossFamily.KULSIF:
        d_weights = 0.5 * (1.0 - ys)
        system = d_weights[:, None] * K / n_total + lam * eye
        rhs = 0.5 * (1.0 + ys) / n_total
    else:
        system = (2.0 / n_total) * K + lam * eye
        rhs = (2.0 / n_total) * ys
    try:
        return np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"closed-form system is singular: {exc}") from exc


def _fit_cg(family, K, ys, lam, opts, callback=None):
    n_total = ys.shape[0]
    tol = opts.tol_grad if opts.tol_grad is not None else 1e-8 * n_total
    alpha = np.zeros(n_total)
    margins = np.zeros(n_total)
    value = float(np.mean(loss_value(family, ys, margins)))
    grad = K @ (loss_d1(family, ys, margins) / n_total)
    direction = -grad
    gg = float(grad @ grad)
    step = 1.0
    iterations = 0
    converged = False

    for iteration in range(1, opts.max_iters + 1):
        grad_norm = float(np.sqrt(gg))
        if callback is not None:
            callback(iteration - 1, alpha, value, grad_norm)
        if grad_norm <= tol:
            converged = True
            break
        iterations = iteration

        slope = float(grad @ direction)
        if slope >= 0.0:  # non-descent: restart on steepest descent
            direction = -grad
            slope = -gg
        kd = K @ direction
        reg1 = float(direction @ margins)
        reg2 = float(direction @ kd)

        def line_delta(t: float) -> float:
            """Objective change from stepping t along the direction."""
            loss_part = float(np.mean(loss_value_delta(family, ys, margins, t * kd)))
            return loss_part + lam * (t * reg1 + 0.5 * t * t * reg2)

        # Trial step from the analytic directional curvature at t = 0:
        # exact line minimizer for quadratic losses, Newton guess otherwise.
        curv = float(np.mean(loss_d2(family, ys, margins) * kd * kd) + lam * reg2)
        if np.isfinite(curv) and curv > 0.0:
            t = -slope / curv
        else:
            t = 2.0 * step
        t = float(min(max(t, 1e-16), 1e12))

        accepted = False
        for _ in range(opts.max_halvings + 1):
            delta = line_delta(t)
            if delta <= opts.armijo_c * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            raise NumericalError(
                f"line search failed after {opts.max_halvings} halvings at iteration {iteration}"
            )

        alpha = alpha + t * direction
        margins = margins + t * kd
        value = value + delta
        step = t

        grad_new = K @ (loss_d1(family, ys, margins) / n_total + lam * alpha)
        gg_new = float(grad_new @ grad_new)
        beta = max(0.0, float(grad_new @ (grad_new - grad)) / gg)
        # Quadratic losses with exact line steps are plain CG: restarting
        # on a schedule throws away the Krylov progress ill-conditioned
        # kernel spectra need, so only non-descent restarts apply.  The
        # curved losses get Powell's orthogonality-loss restart plus a
        # long periodic backstop.
        if family not in QUADRATIC_FAMILIES and (
            abs(float(grad_new @ grad)) >= 0.2 * gg_new or iteration % (10 * n_total) == 0
        ):
            beta = 0.0
        direction = -grad_new + beta * direction
        grad = grad_new
        gg = gg_new

    grad_norm = float(np.sqrt(gg))
    # Recompute the regularized objective from scratch to avoid drift.
    value = float(np.mean(loss_value(family, ys, margins)) + 0.5 * lam * (alpha @ margins))
    return alpha, FitReport(
        iterations=iterations,
        grad_norm=grad_norm,
        objective=value,
        converged=converged,
        method="NonlinearCG",
    )


def fit(
    family: LossFamily,
    kernel: KernelSpec,
    dataset: LabeledDataset,
    lam: float,
    opts: FitOptions | None = None,
    *,
    gram: GramMatrix | None = None,
    callback=None,
) -> tuple[RatioModel, FitReport]:
    """Minimize the regularized objective; returns the model and a report.

    The closed-form path is the default for the margin-quadratic families,
    CG for the rest.  Non-convergence is reported, never silent.
    """
    if dataset.total < 1:
        raise InputError("dataset is empty")
    if not (lam > 0.0 and np.isfinite(lam)):
        raise InputError(f"lambda must be positive, got {lam}")
    opts = opts or FitOptions()
    if opts.method not in ("auto", "cg", "closed_form"):
        raise InputError(f"unknown method {opts.method!r}")
    if gram is None:
        gram = gram_matrix(kernel, dataset.xs)
    K = gram.values
    ys = dataset.ys

    use_closed = opts.method == "closed_form" or (
        opts.method == "auto" and family in QUADRATIC_FAMILIES
    )
    if use_closed:
        alpha = closed_form_fit(family, K, ys, lam)
        value, grad = objective_and_gradient(family, K, ys, alpha, lam)
        tol = opts.tol_grad if opts.tol_grad is not None else 1e-8 * dataset.total
        grad_norm = float(np.linalg.norm(grad))
        report = FitReport(
            iterations=0,
            grad_norm=grad_norm,
            objective=value,
            converged=grad_norm <= tol,
            method="ClosedForm",
        )
    else:
        alpha, report = _fit_cg(family, K, ys.astype(np.float64), lam, opts, callback)
    model = RatioModel(kernel=kernel, points=dataset.xs, alpha=alpha, lam=lam, family=family)
    return model, report


def _margins(model: RatioModel, xs: np.ndarray) -> np.ndarray:
    n_train = model.points.shape[0]
    n_eval = xs.shape[0]
    if n_train * n_eval <= _CHUNK_ENTRIES:
        return cross_matrix(model.kernel, xs, model.points) @ model.alpha
    out = np.empty(n_eval)
    chunk = max(1, _CHUNK_ENTRIES // n_train)
    for start in range(0, n_eval, chunk):
        block = xs[start : start + chunk]
        out[start : start + chunk] = cross_matrix(model.kernel, block, model.points) @ model.alpha
    return out


def predict_margin(model: RatioModel, x):
    """Margin f(x) = sum_j alpha_j k(x_j, x); scalar in, scalar out."""
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0 or (arr.ndim == 1 and model.points.shape[1] != 1)
    if arr.ndim == 1 and model.points.shape[1] != 1 and arr.shape[0] != model.points.shape[1]:
        raise InputError(f"point has dimension {arr.shape[0]}, model expects {model.points.shape[1]}")
    pts = as_points(arr if not scalar else arr.reshape(1, -1))
    if pts.shape[1] != model.points.shape[1]:
        raise InputError(f"points have dimension {pts.shape[1]}, model expects {model.points.shape[1]}")
    values = _margins(model, pts)
    return float(values[0]) if scalar else values


def predict_ratio(model: RatioModel, x):
    """Density-ratio estimate g(f(x)), floored at zero."""
    margins = predict_margin(model, x)
    ratios = ratio_map(model.family, margins)
    return float(ratios) if np.ndim(ratios) == 0 else ratios


def model_to_dict(model: RatioModel, *, seed=None, dataset_hash=None) -> dict:
    return {
        "kernel_family": model.kernel.family.value,
        "bandwidth": model.kernel.bandwidth,
        "loss": model.family.value,
        "lambda": model.lam,
        "points": [[float(v) for v in row] for row in model.points],
        "alpha": [float(v) for v in model.alpha],
        "seed": seed,
        "dataset_hash": dataset_hash,
    }


def save_model(model: RatioModel, path: str, *, seed=None, dataset_hash=None) -> None:
    """Persist a model as a JSON document with stable key order."""
    doc = model_to_dict(model, seed=seed, dataset_hash=dataset_hash)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_model(path: str) -> tuple[RatioModel, dict]:
    """Load a model JSON; returns the model and the raw document."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read model file {path}: {exc}") from exc
    try:
        model = RatioModel(
            kernel=KernelSpec(KernelFamily(doc["kernel_family"]), float(doc["bandwidth"])),
            points=np.asarray(doc["points"], dtype=np.float64),
            alpha=np.asarray(doc["alpha"], dtype=np.float64),
            lam=float(doc["lambda"]),
            family=LossFamily(doc["loss"]),
        )
    except (KeyError, ValueError) as exc:
        raise InputError(f"malformed model file {path}: {exc}") from exc
    return model, doc
