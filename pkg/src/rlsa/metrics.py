"""Performance metrics: dual gap, averaged infeasibility, KKT residuals, rate fits."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .baselines import dykstra_project
from .core import ProblemInstance
from .errors import InsufficientDataError, InvalidArgumentError, SamplingError

#: exact column order of trace CSV files
TRACE_COLUMNS = ("k", "rho_k", "gamma_k", "t_k", "infeas_xbar", "gap_xbar",
                 "gap_method", "lambda_norm", "wall_ms")


def infeasibility(x, instance: ProblemInstance) -> float:
    """Average constraint violation ``(1/J) sum_j max(0, f_j(x))``."""
    return float(np.mean(np.maximum(instance.f(x), 0.0)))


@dataclass(frozen=True)
class GapEstimate:
    value: float
    method: str
    iterations: int = 0
    step_norm: float = float("nan")
    converged: bool = True
    samples: int = 0
    argmax: Optional[np.ndarray] = None


def _ascent_step(A):
    # gradient of y -> (Ay + b)^T (x - y) is Lipschitz with constant ||A + A^T||;
    # the floor keeps the step finite when A is skew
    L = float(np.linalg.norm(A + A.T, 2))
    return 1.0 / max(L, 0.1 * float(np.linalg.norm(A, 2)), 1e-12)


def dual_gap_affine(instance: ProblemInstance, x_bar, inner_tol: float = 1e-8,
                    inner_budget: int = 100_000, warm_start=None,
                    proj_tol: float = 1e-13, proj_budget: int = 100_000) -> GapEstimate:
    """``sup_{y feasible} F(y)^T (x_bar - y)`` for an affine monotone mapping.

    The supremand is a concave quadratic in ``y`` when ``A`` is monotone, so
    accelerated projected ascent (projection by Dykstra) reaches the global
    maximum. ``converged`` is False if the step norm never fell below
    ``inner_tol`` within ``inner_budget`` iterations.
    """
    if instance.affine is None:
        raise InvalidArgumentError("dual_gap_affine needs an instance with an affine mapping")
    A, b = instance.affine
    x_bar = np.ascontiguousarray(x_bar, dtype=float)
    y0 = x_bar if warm_start is None else np.ascontiguousarray(warm_start, dtype=float)
    step = _ascent_step(A)
    kd = instance.kernel_data
    if kd is not None:
        kind, lo, hi, center, radius = kd["base"]
        y = np.empty_like(x_bar)
        it, last = _kernels.gap_ascent(kd["A"], kd["b"], x_bar, y0, kind, lo, hi, center, radius,
                                       kd["P"], kd["Q"], kd["R"], step, inner_tol, inner_budget,
                                       proj_tol, proj_budget, y)
    else:
        y, it, last = _gap_ascent_python(instance, x_bar, y0, step, inner_tol, inner_budget, proj_tol)
    value = float((A @ y + b) @ (x_bar - y))
    return GapEstimate(value, "exact-concave-oracle", int(it), float(last),
                       bool(last <= inner_tol), argmax=y)


def _gap_ascent_python(instance, x_bar, y0, step, tol, budget, proj_tol):
    A, b = instance.affine

    def proj(v):
        return dykstra_project(v, instance, proj_tol).point

    y = proj(y0)
    z = y.copy()
    theta = 1.0
    last = np.inf
    it = 0
    while it < budget:
        it += 1
        g = A.T @ (x_bar - z) - (A @ z + b)
        y_new = proj(z + step * g)
        d = y_new - y
        last = float(np.linalg.norm(d))
        theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta**2))
        if g @ d < 0:
            theta_new = 1.0
            z = y_new.copy()
        else:
            z = y_new + (theta - 1.0) / theta_new * d
        theta = theta_new
        y = y_new
        if last <= tol:
            break
    return y, it, last


def rejection_sample_feasible(instance: ProblemInstance, sample_budget: int, rng, block: int = 256):
    """Feasible points among ``sample_budget`` uniform draws from the base set.

    Draws come in fixed blocks, so the candidates for a budget ``m`` are a
    prefix of those for any larger budget under the same seed.
    """
    nblocks = -(-sample_budget // block)
    pts = np.concatenate([instance.base_set.sample(rng, block) for _ in range(nblocks)])[:sample_budget]
    if instance.kernel_data is not None:
        kd = instance.kernel_data
        vals = np.einsum("kn,jn->kj", 0.5 * pts**2, kd["P"]) + pts @ kd["Q"].T + kd["R"]
        keep = np.all(vals <= 0, axis=1)
    else:
        keep = np.array([np.all(instance.f(p) <= 0) for p in pts], dtype=bool)
    return pts[keep]


def dual_gap_sampled(instance: ProblemInstance, x_bar, sample_budget: int = 10_000, rng=None,
                     candidates=None, include_reference: bool = True) -> GapEstimate:
    """Lower bound on the dual gap: maximum of ``F(y)^T (x_bar - y)`` over feasible samples.

    ``candidates`` (extra feasible points) and the instance's reference
    solution are added to the sampled set. With ``sample_budget=0`` only
    those explicit points are used.
    """
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(0 if rng is None else int(rng))
    x_bar = np.asarray(x_bar, dtype=float)
    pool = [rejection_sample_feasible(instance, sample_budget, rng)] if sample_budget > 0 else []
    if candidates is not None:
        pool.append(np.atleast_2d(np.asarray(candidates, dtype=float)))
    if include_reference and instance.reference is not None:
        pool.append(instance.reference[0][None, :])
    ys = np.concatenate(pool) if pool else np.empty((0, instance.n))
    if len(ys) == 0:
        raise SamplingError(f"no feasible point among {sample_budget} samples; the Slater "
                            "condition guarantees some exist, so increase sample_budget")
    if instance.affine is not None:
        A, b = instance.affine
        Fy = ys @ A.T + b
    else:
        Fy = np.array([instance.F(y) for y in ys])
    vals = np.einsum("ij,ij->i", Fy, x_bar - ys)
    i = int(np.argmax(vals))
    return GapEstimate(float(vals[i]), "sampled-lower-bound", samples=len(ys), argmax=ys[i])


@dataclass(frozen=True)
class KKTResidual:
    stationarity: float
    complementarity: float
    primal_feasibility: float
    dual_feasibility: float

    def max_violation(self) -> float:
        return max(self.stationarity, self.complementarity, self.primal_feasibility,
                   max(-self.dual_feasibility, 0.0))


def kkt_residual(instance: ProblemInstance, x, lam) -> KKTResidual:
    """Residuals of the KKT system at ``(x, lam)``.

    Stationarity is the fixed-point form ``||P_X(x - (F(x) + (1/J) sum_j
    lam_j grad f_j(x))) - x||``, zero exactly when the inclusion with the
    normal cone of ``X`` holds. Dual feasibility is ``min_j lam_j`` and is
    reported with its sign.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    fx = instance.f(x)
    G = instance.grad_f(x)
    v = instance.F(x) + (lam @ G) / instance.J
    stat = float(np.linalg.norm(instance.base_set.project(x - v) - x))
    return KKTResidual(stat, float(abs(lam @ fx)), float(max(np.max(fx), 0.0)), float(np.min(lam)))


def kkt_error_function(instance: ProblemInstance, x, x_star, lam_star) -> float:
    """``F(x*)^T (x - x*) + (1/J) f(x)^T lam*``; nonnegative on X for a KKT pair."""
    x = np.asarray(x, dtype=float)
    return float(instance.F(x_star) @ (x - x_star) + instance.f(x) @ np.asarray(lam_star) / instance.J)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    points: int


def rate_fit(ks, values, k_min: float = 1) -> RateFit:
    """Least-squares line through ``(log k, log value)`` for ``k >= k_min``."""
    ks = np.asarray(ks, dtype=float)
    values = np.asarray(values, dtype=float)
    use = (ks >= k_min) & (ks > 0) & (values > 0) & np.isfinite(values)
    if use.sum() < 5:
        raise InsufficientDataError(f"need at least 5 positive checkpoints with k >= {k_min}, "
                                    f"got {int(use.sum())}")
    lx, ly = np.log(ks[use]), np.log(values[use])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RateFit(float(slope), float(intercept), r2, int(use.sum()))


def rate_fit_trace(trace, metric: str = "gap_xbar", k_min: float = 1) -> RateFit:
    return rate_fit([getattr(r, "k") for r in trace], [getattr(r, metric) for r in trace], k_min)


@dataclass(frozen=True)
class TraceRecord:
    k: int
    rho_k: float
    gamma_k: float
    t_k: float
    infeas_xbar: float
    gap_xbar: float
    gap_method: str
    lambda_norm: float
    wall_ms: float
    xbar_feasible: bool = False
    gap_converged: bool = True

    def row(self) -> list:
        d = asdict(self)
        return [d[c] for c in TRACE_COLUMNS]


def trace_record(instance, config, state, gap, gap_state, gap_options, wall_ms) -> TraceRecord:
    """Metrics of the ergodic average at the solver's current state."""
    from .solver import step_sizes

    rho_k, gamma_k, t_k = step_sizes(state.k, config)
    xbar = state.average(config)
    infeas = infeasibility(xbar, instance)
    gval, method, conv = float("nan"), "none", True
    if gap == "affine" and instance.affine is not None:
        est = dual_gap_affine(instance, xbar, warm_start=gap_state.get("warm"), **gap_options)
        gap_state["warm"] = est.argmax
        gval, method, conv = est.value, est.method, est.converged
    elif gap in ("affine", "sampled"):
        opts = {"sample_budget": 2000, "rng": 0, **gap_options}
        est = dual_gap_sampled(instance, xbar, **opts)
        gval, method = est.value, est.method
    return TraceRecord(state.k, rho_k, gamma_k, t_k, infeas, gval, method,
                       float(np.linalg.norm(state.lam)), wall_ms,
                       xbar_feasible=bool(infeas == 0.0), gap_converged=conv)
