"""Invariant suite behind ``rlsa validate``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import lagrangian as lg
from ..baselines import feasible_grid_2d, grid_gap
from ..core import ProblemInstance, certified_bounds, check_monotonicity
from ..metrics import dual_gap_affine
from ..problems import affine_instance


@dataclass(frozen=True)
class CheckResult:
    invariant: str
    instance: str
    passed: bool
    detail: str


def random_states(instance: ProblemInstance, count: int, rng, lam_max: float = 10.0):
    """``(rho, x, lam)`` triples with ``x`` uniform on X and ``lam`` uniform on ``[0, lam_max]^J``."""
    xs = instance.base_set.sample(rng, count)
    lams = rng.uniform(0.0, lam_max, (count, instance.J))
    rhos = 10.0 ** rng.uniform(-2, 1, count)
    return list(zip(rhos, xs, lams))


def delta_checks(name, instance, states, bounds):
    worst_mean = 0.0
    worst_ratio = 0.0
    for rho, x, lam in states:
        mean, second = lg.delta_moments(rho, x, lam, instance)
        worst_mean = max(worst_mean, float(np.max(np.abs(mean))))
        bound = lg.delta_variance_bound(rho, lam, bounds.C_f, bounds.D_f, instance.J)
        worst_ratio = max(worst_ratio, second / bound if bound > 0 else (0.0 if second == 0 else np.inf))
    return [CheckResult("delta-unbiased", name, worst_mean <= 1e-12, f"max |mean delta| = {worst_mean:.3g}"),
            CheckResult("delta-variance-bound", name, worst_ratio <= 1.0,
                        f"max second moment / bound = {worst_ratio:.4f}")]


def subgrad_check(name, instance, states, bounds):
    worst = 0.0
    for rho, x, lam in states:
        g = lg.primal_subgrad_full(rho, x, lam, instance)
        bound = lg.subgrad_norm_bound(rho, lam, bounds.C_f, bounds.D_f, instance.J)
        worst = max(worst, float(g @ g) / bound if bound > 0 else 0.0)
    return CheckResult("subgradient-norm-bound", name, worst <= 1.0, f"max ||g||^2 / bound = {worst:.4f}")


def slater_check(name, instance, samples=20_000, rng=0):
    pts = instance.base_set.sample(np.random.default_rng(rng), samples)
    worst = np.array([np.max(instance.f(p)) for p in pts])
    i = int(np.argmin(worst))
    return CheckResult("slater", name, bool(worst[i] < 0),
                       f"best max_j f_j = {worst[i]:.4g} at sampled point")


def monotonicity_check(name, instance, pairs=5000):
    rep = check_monotonicity(instance, pairs, rng=1)
    detail = f"min (F(x)-F(y))^T(x-y) = {rep.min_value:.4g}"
    if not rep.passed:
        x, y = rep.witness
        detail += f"; witness x={np.round(x, 6).tolist()}, y={np.round(y, 6).tolist()}"
    return CheckResult("monotonicity", name, rep.passed, detail)


def gap_grid_check(name, instance, queries=10, grid_points=1_000_000, tol=1e-3, rng=2):
    grid = feasible_grid_2d(instance, grid_points)
    rng = np.random.default_rng(rng)
    lo, hi = instance.base_set.bounding_box()
    worst = 0.0
    for x in rng.uniform(lo, hi, (queries, 2)):
        # the grid is a subset of the feasible set, so it can only fall short
        worst = max(worst, abs(dual_gap_affine(instance, x).value - grid_gap(instance, x, grid)))
    return CheckResult("gap-oracle-vs-grid", name, worst <= tol, f"max |oracle - grid| = {worst:.3g}")


def non_monotone_variant(instance: ProblemInstance) -> ProblemInstance:
    """Same feasible set, mapping ``F(x) = -x`` (fails monotonicity)."""
    n = instance.n
    return affine_instance(-np.eye(n), np.zeros(n), instance.constraints, instance.base_set,
                           name="non-monotone(-x)")


def run_suite(instances: dict, states_per_instance=100, seed=0, grid_points=1_000_000,
              subgrad_states=1000):
    results = []
    rng = np.random.default_rng(seed)
    for name, inst in instances.items():
        bounds = certified_bounds(inst)
        results += delta_checks(name, inst, random_states(inst, states_per_instance, rng), bounds)
        results.append(subgrad_check(name, inst, random_states(inst, subgrad_states, rng), bounds))
        results.append(monotonicity_check(name, inst))
        results.append(slater_check(name, inst))
        if inst.n == 2 and inst.affine is not None:
            results.append(gap_grid_check(name, inst, grid_points=grid_points))
    return results


def format_table(results) -> str:
    w1 = max(len(r.invariant) for r in results)
    w2 = max(len(r.instance) for r in results)
    lines = [f"{'invariant':<{w1}}  {'instance':<{w2}}  result  detail"]
    for r in results:
        lines.append(f"{r.invariant:<{w1}}  {r.instance:<{w2}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}")
    return "\n".join(lines)

