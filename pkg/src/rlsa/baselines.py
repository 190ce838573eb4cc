"""Reference solvers used to certify RLSA output.

These project onto the full feasible set ``X ∩ {f_j <= 0}`` with Dykstra's
algorithm, which is exactly the expensive operation RLSA avoids. They are
meant for desk-scale certification and are slow at scale by design.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from . import _kernels
from .core import ProblemInstance
from .sets import Ball, Box, QuadraticConstraint


@dataclass(frozen=True)
class ProjectionResult:
    point: np.ndarray
    iterations: int
    correction: float
    converged: bool


def dykstra_project(y, instance: ProblemInstance, tol: float = 1e-12,
                    budget: int = 100_000) -> ProjectionResult:
    """Nearest point of the feasible set to ``y``.

    Cycles through the constraint sets and finishes each cycle with the base
    set, so the returned point lies in ``X`` exactly. Stops when an entire
    cycle moves the iterate less than ``tol`` and no constraint is violated
    by more than ``tol``.
    """
    y = np.ascontiguousarray(y, dtype=float)
    kd = instance.kernel_data
    if kd is not None:
        out = np.empty_like(y)
        kind, lo, hi, center, radius = kd["base"]
        cycles, move = _kernels.dykstra(y, kind, lo, hi, center, radius,
                                        kd["P"], kd["Q"], kd["R"], tol, budget, out)
        converged = move < tol and max(instance.f(out).max(), 0.0) <= tol
        return ProjectionResult(out, int(cycles), float(move), bool(converged))
    return _dykstra_python(y, instance, tol, budget)


def _dykstra_python(y, instance, tol, budget):
    sets = [c.project for c in instance.constraints] + [instance.base_set.project]
    incr = np.zeros((len(sets), y.size))
    x = y.copy()
    move = np.inf
    cycles = 0
    converged = False
    while cycles < budget:
        cycles += 1
        prev = x.copy()
        for s, proj in enumerate(sets):
            z = x + incr[s]
            x = proj(z)
            incr[s] = z - x
        move = float(np.linalg.norm(x - prev))
        if move < tol and max(instance.f(x).max(), 0.0) <= tol:
            converged = True
            break
    return ProjectionResult(x, cycles, move, converged)


def lipschitz_constant(instance: ProblemInstance, samples: int = 2000, rng=0) -> float:
    """Lipschitz constant of the mean mapping on ``X``.

    Exact spectral norm for affine instances, otherwise the largest sampled
    difference quotient.
    """
    if instance.affine is not None:
        return float(np.linalg.norm(instance.affine[0], 2))
    rng = np.random.default_rng(rng)
    xs = instance.base_set.sample(rng, samples)
    ys = instance.base_set.sample(rng, samples)
    best = 0.0
    for x, y in zip(xs, ys):
        d = np.linalg.norm(x - y)
        if d > 0:
            best = max(best, np.linalg.norm(instance.F(x) - instance.F(y)) / d)
    return float(best)


@dataclass
class ExtragradientResult:
    x: np.ndarray
    lam: np.ndarray
    iterations: int
    last_step: float
    converged: bool
    kkt: object


def recover_multipliers(instance: ProblemInstance, x, active_tol: float = 1e-6) -> np.ndarray:
    """Multipliers for ``x`` by nonnegative least squares on the active constraints.

    Solves ``min ||F(x) + (1/J) sum_j lam_j grad f_j(x) + N||`` over
    ``lam >= 0`` restricted to constraints with ``f_j(x) >= -active_tol`` and
    nonnegative combinations ``N`` of outward normals of active base-set faces.
    """
    J = instance.J
    Fx = instance.F(x)
    fx = instance.f(x)
    G = instance.grad_f(x)
    active = np.flatnonzero(fx >= -active_tol)
    cols = [G[j] / J for j in active]
    bs = instance.base_set
    if isinstance(bs, Box):
        for i in range(instance.n):
            e = np.zeros(instance.n)
            if x[i] >= bs.upper[i] - active_tol:
                e[i] = 1.0
                cols.append(e)
            elif x[i] <= bs.lower[i] + active_tol:
                e[i] = -1.0
                cols.append(e)
    elif np.linalg.norm(x - bs.center) >= bs.radius - active_tol:
        cols.append(x - bs.center)
    lam = np.zeros(J)
    if not cols:
        return lam
    coef, _ = nnls(np.array(cols).T, -Fx)
    lam[active] = coef[:len(active)]
    return lam


def projected_extragradient(instance: ProblemInstance, step: Optional[float] = None,
                            iters: int = 100_000, tol: float = 1e-10, x0=None,
                            proj_tol: float = 1e-13, active_tol: float = 1e-6) -> ExtragradientResult:
    """Deterministic projected extragradient on the mean mapping.

    ``y = P(x - s F(x))``, ``x+ = P(x - s F(y))`` with ``P`` the Dykstra
    projection onto the feasible set; stops when ``||x+ - x|| <= tol``. The
    result is certified by :func:`rlsa.metrics.kkt_residual` with multipliers
    from :func:`recover_multipliers`.
    """
    from .metrics import kkt_residual

    if step is None:
        L = lipschitz_constant(instance)
        step = 0.9 / L if L > 0 else 1.0
    x = np.zeros(instance.n) if x0 is None else np.asarray(x0, dtype=float)
    x = dykstra_project(x, instance, proj_tol).point
    last = np.inf
    it = 0
    for it in range(1, iters + 1):
        y = dykstra_project(x - step * instance.F(x), instance, proj_tol).point
        x_new = dykstra_project(x - step * instance.F(y), instance, proj_tol).point
        last = float(np.linalg.norm(x_new - x))
        x = x_new
        if last <= tol:
            break
    lam = recover_multipliers(instance, x, active_tol)
    return ExtragradientResult(x, lam, it, last, last <= tol, kkt_residual(instance, x, lam))


def _feasible_mask(instance, pts):
    keep = np.ones(len(pts), dtype=bool)
    if isinstance(instance.base_set, Ball):
        keep &= np.linalg.norm(pts - instance.base_set.center, axis=1) <= instance.base_set.radius
    for c in instance.constraints:
        if isinstance(c, QuadraticConstraint):
            vals = np.sum((0.5 * c.p * pts + c.q) * pts, axis=1) + c.r
        else:
            vals = np.array([c.value(p) for p in pts])
        keep &= vals <= 0
    return keep


def _grid(lo, hi, m):
    g0, g1 = np.meshgrid(np.linspace(lo[0], hi[0], m), np.linspace(lo[1], hi[1], m), indexing="ij")
    return np.column_stack([g0.ravel(), g1.ravel()])


def feasible_grid_2d(instance: ProblemInstance, points: int = 1_000_000, coarse: int = 201):
    """Feasible nodes of a regular grid with ``points`` nodes spanning the feasible set.

    A ``coarse`` x ``coarse`` grid over the bounding box of X locates the
    feasible set; its extent, padded by one coarse cell and clipped to X,
    is then covered by the fine grid.
    """
    if instance.n != 2:
        raise ValueError("grid oracles are for 2-D instances")
    lo, hi = instance.base_set.bounding_box()
    pts = _grid(lo, hi, coarse)
    feas = pts[_feasible_mask(instance, pts)]
    if len(feas):
        cell = (hi - lo) / (coarse - 1)
        lo, hi = np.maximum(feas.min(axis=0) - cell, lo), np.minimum(feas.max(axis=0) + cell, hi)
    pts = _grid(lo, hi, int(round(np.sqrt(points))))
    return pts[_feasible_mask(instance, pts)]


def grid_gap(instance: ProblemInstance, x, grid) -> float:
    """Brute-force ``max_y F(y)^T (x - y)`` over the rows of ``grid`` (affine instances)."""
    A, b = instance.affine
    Fy = grid @ A.T + b
    return float(np.max(np.einsum("ij,ij->i", Fy, np.asarray(x) - grid)))


def grid_nearest(x, grid) -> np.ndarray:
    return grid[np.argmin(np.sum((grid - np.asarray(x)) ** 2, axis=1))]
