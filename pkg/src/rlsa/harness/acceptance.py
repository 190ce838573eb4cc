"""Acceptance suite: the eight numbered release criteria.

Each ``criterion_*`` function returns a :class:`CriterionResult`; the rate
experiment is run once and shared by criteria 5, 6 and 7.
"""

from __future__ import annotations

import json
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import lagrangian as lg
from ..baselines import projected_extragradient
from ..core import certified_bounds
from ..metrics import rate_fit
from ..problems import (InstanceDescriptor, build, default_zoo, make_affine_vi, make_nash_cournot,
                        rate_benchmark_descriptor, scalar_kkt_instance)
from ..solver import SolverConfig, max_coupled_rho, run
from .checks import gap_grid_check, random_states
from .config import ExperimentConfig
from .runner import bench, read_trace, solve_one

ZOO_NOISE = 0.1
RATE_K = 1_000_000
RATE_SEEDS = 20
RATE_BAND = (-0.50, -0.30)
RATE_K_MIN = 1000
AGREEMENT_TOL = 5e-2
DUAL_GROWTH = 10.0

#: Step sizes per zoo instance for the agreement runs: ``gamma0 = gamma_scale / ||A||``
#: and ``rho0 = rho_fill`` times the largest rho0 allowed by the coupling condition
#: at that gamma0 (certified C_f). Fills above 1 break the coupling condition on
#: purpose; with fill <= 1 the multipliers of active constraints converge too
#: slowly to reach the tolerance within the iteration budget.
AGREEMENT_SETTINGS = {
    "affine-vi(2,4)": (1.0, 30.0),
    "affine-vi(5,10)": (0.3, 30.0),
    "bilinear-minimax(2,2)": (0.3, 30.0),
    "nash-cournot(3)": (1.0, 1.0),
    "scalar-kkt": (0.3, 3.0),
}


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return (f"criterion {self.number} [{'PASS' if self.passed else 'FAIL'}] {self.name}: "
                f"{self.detail} ({self.seconds:.1f} s)")


def _timed(number, name, fn):
    t0 = time.perf_counter()
    passed, detail = fn()
    return CriterionResult(number, name, passed, detail, time.perf_counter() - t0)


def zoo():
    return default_zoo(ZOO_NOISE)


def criterion_delta(states: int = 100, seed: int = 0) -> CriterionResult:
    """Exhaustive mean of delta is zero to 1e-12; second moment within the bound."""
    def body():
        rng = np.random.default_rng(seed)
        worst_mean, worst_ratio = 0.0, 0.0
        for inst in zoo().values():
            bounds = certified_bounds(inst)
            for rho, x, lam in random_states(inst, states, rng):
                mean, second = lg.delta_moments(rho, x, lam, inst)
                worst_mean = max(worst_mean, float(np.max(np.abs(mean))))
                bound = lg.delta_variance_bound(rho, lam, bounds.C_f, bounds.D_f, inst.J)
                worst_ratio = max(worst_ratio, second / bound)
        return (worst_mean <= 1e-12 and worst_ratio <= 1.0,
                f"max |E delta| = {worst_mean:.2e} (<= 1e-12), max E||delta||^2 / bound = {worst_ratio:.3f} (<= 1)")
    return _timed(1, "delta unbiased with bounded second moment", body)


def criterion_subgrad(states: int = 1000, seed: int = 1) -> CriterionResult:
    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for inst in zoo().values():
            bounds = certified_bounds(inst)
            for rho, x, lam in random_states(inst, states, rng):
                g = lg.primal_subgrad_full(rho, x, lam, inst)
                worst = max(worst, float(g @ g) / lg.subgrad_norm_bound(rho, lam, bounds.C_f, bounds.D_f, inst.J))
        return worst <= 1.0, f"max ||g||^2 / bound = {worst:.3f} (<= 1) over {states} states per instance"
    return _timed(2, "subgradient norm bound", body)


def kkt_instances():
    """``(name, instance, x_star, lam_star)`` with hand-solved KKT pairs.

    Cournot, two symmetric players with ``c = 1, q = 1/2, p0 = 10, beta = 1``:
    the interior equilibrium is ``x = 9/4``; a capacity of 2 binds at
    ``x = (2, 2)`` where ``F_i = -1``, so stationarity
    ``F_i + lam_cap_i / J = 0`` with ``J = 4`` gives ``lam_cap_i = 4``.
    """
    cournot = make_nash_cournot(0, 2, caps=2.0, c=1.0, q=0.5, p0=10.0, beta=1.0, kappa=0.1)
    return [("scalar", scalar_kkt_instance(), np.array([1.0]), np.array([1.0])),
            ("cournot-2-symmetric", cournot, np.array([2.0, 2.0]), np.array([4.0, 0.0, 4.0, 0.0]))]


def criterion_kkt(tol: float = 1e-6) -> CriterionResult:
    def body():
        ok, parts = True, []
        for name, inst, xs, ls in kkt_instances():
            eg = projected_extragradient(inst, tol=1e-12)
            worst = eg.kkt.max_violation()
            err = max(float(np.max(np.abs(eg.x - xs))), float(np.max(np.abs(eg.lam - ls))))
            ok &= worst <= tol and err <= tol
            parts.append(f"{name}: max residual {worst:.1e}, |(x,lam) - hand| {err:.1e}")
        return ok, "; ".join(parts)
    return _timed(3, "KKT certification of the baseline", body)


def gap_instances():
    return {f"affine-vi(2,4) seed {s}": make_affine_vi(s, 2, 4) for s in (1, 2, 3)}


def criterion_gap_oracle(grid_points: int = 1_000_000, queries: int = 10) -> CriterionResult:
    def body():
        res = [gap_grid_check(name, inst, queries, grid_points) for name, inst in gap_instances().items()]
        return all(r.passed for r in res), "; ".join(f"{r.instance}: {r.detail.split('= ')[1]}" for r in res)
    return _timed(4, "gap oracle vs 10^6-point grid (tol 1e-3)", body)


def rate_benchmark_config(seeds: int = RATE_SEEDS, iters: int = RATE_K) -> ExperimentConfig:
    """The rate experiment: boundary solution with zero multiplier, outward start.

    ``rho0 = 0.005`` is about 3% of the largest value allowed by the
    coupling condition at ``gamma0 = 0.3``.
    """
    return ExperimentConfig(
        descriptor=rate_benchmark_descriptor(),
        solver=SolverConfig(rho0=0.005, gamma0=0.3, iters=iters, check_coupling=True),
        seeds=list(range(seeds)), extra_checkpoints=[RATE_K_MIN], start="outward:0.3",
    ).validate()


@dataclass
class RateExperiment:
    ks: np.ndarray
    gap: np.ndarray          # (seeds, checkpoints)
    infeas: np.ndarray
    lambda_norm: np.ndarray
    lambda_sq_max: np.ndarray
    xbar: np.ndarray         # (seeds, n)
    out_dir: Path
    seconds: float
    report: dict = field(default_factory=dict)


def rate_experiment(out_dir=None, seeds: int = RATE_SEEDS, iters: int = RATE_K) -> RateExperiment:
    cfg = rate_benchmark_config(seeds, iters)
    out_dir = Path(out_dir or tempfile.mkdtemp(prefix="rlsa_rate_"))
    t0 = time.perf_counter()
    report = bench(cfg, out_dir)
    traces = [read_trace(out_dir / f"trace_seed{s}.csv") for s in cfg.seeds]
    summaries = [json.loads((out_dir / f"summary_seed{s}.json").read_text()) for s in cfg.seeds]
    return RateExperiment(
        ks=traces[0]["k"].astype(int),
        gap=np.array([t["gap_xbar"] for t in traces]),
        infeas=np.array([t["infeas_xbar"] for t in traces]),
        lambda_norm=np.array([t["lambda_norm"] for t in traces]),
        lambda_sq_max=np.array([s["lambda_sq_max"] for s in summaries]),
        xbar=np.array([s["xbar"] for s in summaries]),
        out_dir=out_dir, seconds=time.perf_counter() - t0, report=report)


def criterion_rate(exp: RateExperiment) -> CriterionResult:
    def body():
        lo, hi = RATE_BAND
        ok, parts = True, []
        for name, vals in (("gap", exp.gap), ("infeasibility", exp.infeas)):
            fit = rate_fit(exp.ks, vals.mean(axis=0), k_min=RATE_K_MIN)
            ok &= lo <= fit.slope <= hi and fit.points == int(np.sum(exp.ks >= RATE_K_MIN))
            parts.append(f"{name} slope {fit.slope:.3f} (r2 {fit.r2:.3f}, {fit.points} pts)")
        return ok, ", ".join(parts) + f" in [{lo}, {hi}]; experiment {exp.seconds:.0f} s"
    return _timed(5, "convergence-rate regression", body)


def _agreement_run(inst, gamma_scale, fill, seeds, iters):
    bounds = certified_bounds(inst)
    gamma0 = gamma_scale / float(np.linalg.norm(inst.affine[0], 2))
    rho0 = fill * max_coupled_rho(gamma0, bounds, inst.J)
    xbars = [run(inst, SolverConfig(rho0=rho0, gamma0=gamma0, iters=iters, noise_seed=s, index_seed=s),
                 checkpoints=[iters], gap=None, timing=False).xbar for s in range(seeds)]
    return np.mean(xbars, axis=0)


def criterion_agreement(exp: RateExperiment, seeds: int = RATE_SEEDS, iters: int = RATE_K) -> CriterionResult:
    def body():
        dists = {}
        for name, inst in zoo().items():
            x_bar = _agreement_run(inst, *AGREEMENT_SETTINGS[name], seeds, iters)
            dists[name] = float(np.linalg.norm(x_bar - projected_extragradient(inst).x))
        inst = build(rate_benchmark_config().descriptor)
        dists["rate-benchmark"] = float(np.linalg.norm(exp.xbar.mean(axis=0) - projected_extragradient(inst).x))
        ok = all(d < AGREEMENT_TOL for d in dists.values())
        return ok, ", ".join(f"{k} {v:.4f}" for k, v in dists.items()) + f" (< {AGREEMENT_TOL})"
    return _timed(6, "agreement with the extragradient baseline", body)


def criterion_dual_bound(exp: RateExperiment) -> CriterionResult:
    def body():
        i = int(np.flatnonzero(exp.ks == RATE_K_MIN)[0])
        at_k = exp.lambda_norm[:, i] ** 2
        # a zero multiplier at k = 1000 leaves no room for growth; the ratio is infinite unless max is 0
        ratios = np.where(at_k > 0, exp.lambda_sq_max / np.where(at_k > 0, at_k, 1.0),
                          np.where(exp.lambda_sq_max > 0, np.inf, 1.0))
        worst = int(np.argmax(ratios))
        return (bool(np.all(ratios <= DUAL_GROWTH)),
                f"max_k ||lam_k||^2 / ||lam_1000||^2 = {ratios[worst]:.2f} (seed {worst}) <= {DUAL_GROWTH}")
    return _timed(7, "dual boundedness guard", body)


def criterion_determinism(iters: int = 100_000) -> CriterionResult:
    def body():
        cfg = ExperimentConfig(InstanceDescriptor("affine-vi", 7, {"n": 2, "J": 4}, ZOO_NOISE),
                               SolverConfig(iters=iters), seeds=[7]).validate()
        with tempfile.TemporaryDirectory() as tmp:
            blobs = []
            for rep in range(2):
                out = Path(tmp) / f"rep{rep}"
                solve_one(cfg, 7, out)
                blobs.append((out / "trace_seed7.csv").read_bytes())
        return blobs[0] == blobs[1], f"two runs, {len(blobs[0])} bytes, identical: {blobs[0] == blobs[1]}"
    return _timed(8, "byte-identical traces", body)


def run_all(out_dir=None):
    """All eight criteria in order (the rate experiment is shared)."""
    results = [criterion_delta(), criterion_subgrad(), criterion_kkt(), criterion_gap_oracle()]
    exp = rate_experiment(out_dir)
    results += [criterion_rate(exp), criterion_agreement(exp), criterion_dual_bound(exp),
                criterion_determinism()]
    return results


def main() -> int:
    results = run_all()
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    raise SystemExit(main())
