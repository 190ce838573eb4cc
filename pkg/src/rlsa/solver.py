"""Randomized Lagrangian stochastic approximation (RLSA).

One iteration, with step sizes ``rho_k, gamma_k`` and averaging weight ``t_k``:

1. draw ``j_k`` uniformly from the constraint indices and a noise sample
   ``xi_k``, from two independent streams;
2. ``lam[j_k] <- max(rho_k f_{j_k}(x_k) + lam[j_k], 0)``, other
   multipliers unchanged;
3. ``x_{k+1} = Proj_X(x_k - gamma_k (F(x_k, xi_k) + lam[j_k] grad f_{j_k}(x_k)))``.

The reported solution is the weighted average of ``x_0 .. x_K`` with
weights ``t_0 .. t_K``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .core import BoundEstimates, ProblemInstance, certified_bounds, evaluate_mapping
from .errors import ConfigurationError, CouplingError, OracleError

SCHEDULES = ("decaying", "constant")
BACKENDS = ("auto", "python", "compiled")

#: number of draws pulled from each random stream at a time
STREAM_BLOCK = 4096


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one RLSA run.

    ``schedule="decaying"`` uses ``rho_k = rho0 / (sqrt(k+1) ln(k+1))`` (and the
    same shape for ``gamma_k`` and ``t_k``) for ``k >= 1``, capped at the
    ``k = 0`` values ``(rho0, gamma0, 1)``. ``schedule="constant"`` keeps all
    three fixed with ``t_k = 1``.
    """

    rho0: float = 1.0
    gamma0: float = 0.1
    iters: int = 10_000
    noise_seed: int = 0
    index_seed: int = 0
    schedule: str = "decaying"
    check_coupling: bool = False
    x0: Optional[tuple] = None
    backend: str = "auto"

    def validate(self):
        for name in ("rho0", "gamma0"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigurationError(f"{name} must be a positive finite number, got {v!r}")
        if not isinstance(self.iters, (int, np.integer)) or self.iters < 0:
            raise ConfigurationError(f"iters must be a nonnegative integer, got {self.iters!r}")
        if self.schedule not in SCHEDULES:
            raise ConfigurationError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.backend not in BACKENDS:
            raise ConfigurationError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        return self

    @classmethod
    def from_seed(cls, seed: int, **kwargs):
        """Both streams keyed by the same replication seed (they stay independent)."""
        return cls(noise_seed=seed, index_seed=seed, **kwargs)


def step_sizes(k: int, config: SolverConfig):
    """``(rho_k, gamma_k, t_k)`` for iteration ``k``."""
    return _kernels.schedule.py_func(k, config.rho0, config.gamma0, config.schedule == "decaying")


class RandomStreams:
    """The noise stream and the index stream, independently seeded Philox generators.

    Draws are made in fixed blocks of :data:`STREAM_BLOCK`, so the sequence
    of values does not depend on how callers slice their requests.
    """

    def __init__(self, instance: ProblemInstance, noise_seed: int, index_seed: int,
                 block: int = STREAM_BLOCK):
        self._noise_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([noise_seed, 0])))
        self._index_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([index_seed, 1])))
        self._sampler = instance.sample_noise
        self._J = instance.J
        self._block = block
        self._noise = self._idx = None
        self._pos = block

    def _refill(self):
        self._noise = np.ascontiguousarray(self._sampler(self._noise_rng, self._block), dtype=float)
        self._idx = self._index_rng.integers(0, self._J, size=self._block)
        self._pos = 0

    def take(self, m: int):
        """Next ``m`` noise rows and ``m`` constraint indices."""
        noise, idx = [], []
        while m > 0:
            if self._pos == self._block:
                self._refill()
            c = min(m, self._block - self._pos)
            noise.append(self._noise[self._pos:self._pos + c])
            idx.append(self._idx[self._pos:self._pos + c])
            self._pos += c
            m -= c
        if not noise:
            return np.empty((0, 0)), np.empty(0, dtype=np.int64)
        return np.concatenate(noise), np.concatenate(idx)


@dataclass
class SolverState:
    """Iterate, multipliers and the running sums behind the ergodic average.

    ``sum_x`` and ``sum_t`` hold ``t_0 x_0 + ... + t_{k-1} x_{k-1}`` and
    ``t_0 + ... + t_{k-1}``; the current iterate ``x`` is added on demand by
    :meth:`average`.
    """

    k: int
    x: np.ndarray
    lam: np.ndarray
    sum_x: np.ndarray
    sum_t: float = 0.0
    rho_k: float = float("nan")
    gamma_k: float = float("nan")
    t_k: float = float("nan")
    j_k: int = -1

    def copy(self):
        return replace(self, x=self.x.copy(), lam=self.lam.copy(), sum_x=self.sum_x.copy())

    def average(self, config: SolverConfig) -> np.ndarray:
        """Weighted average of ``x_0 .. x_k``."""
        _, _, t = step_sizes(self.k, config)
        return (self.sum_x + t * self.x) / (self.sum_t + t)


def initial_state(instance: ProblemInstance, config: SolverConfig) -> SolverState:
    x0 = np.zeros(instance.n) if config.x0 is None else np.asarray(config.x0, dtype=float)
    if x0.shape != (instance.n,):
        raise ConfigurationError(f"x0 must have length {instance.n}")
    x0 = instance.base_set.project(x0)
    return SolverState(0, x0, np.zeros(instance.J), np.zeros(instance.n), 0.0)


def _advance(state, instance, config, noise, j):
    """One RLSA iteration from explicit draws; returns a new state."""
    k = state.k
    rho_k, gamma_k, t_k = step_sizes(k, config)
    x = state.x
    c = instance.constraints[j]
    lam = state.lam.copy()
    lam[j] = max(rho_k * c.value(x) + lam[j], 0.0)
    try:
        Fx = evaluate_mapping(instance, x, noise)
    except OracleError as exc:
        raise OracleError(f"iteration {k}: {exc}", exc.coordinate, k) from exc
    y = x - gamma_k * (Fx + lam[j] * c.subgradient(x))
    return SolverState(k + 1, instance.base_set.project(y), lam,
                       state.sum_x + t_k * x, state.sum_t + t_k,
                       rho_k, gamma_k, t_k, j)


def rlsa_step(state: SolverState, instance: ProblemInstance, config: SolverConfig,
              streams: RandomStreams) -> SolverState:
    """Draw ``(xi_k, j_k)`` from the streams and perform one iteration."""
    noise, idx = streams.take(1)
    return _advance(state, instance, config, noise[0], int(idx[0]))


@dataclass(frozen=True)
class CouplingReport:
    passed: bool
    margin: float
    lhs: float
    rhs: float
    C_f: float
    J: int
    note: str = ("condition read as (rho*gamma)^2 <= J / (120 C_f^2), "
                 "the rearrangement of rho*gamma <= 1 / (120 rho*gamma C_f^2 / J)")

    def describe(self) -> str:
        verdict = "holds" if self.passed else "violated"
        return (f"coupling (rho*gamma)^2 <= J/(120*C_f^2) {verdict}: "
                f"lhs={self.lhs:.6g}, rhs={self.rhs:.6g} (J={self.J}, C_f={self.C_f:.6g}); {self.note}")


def check_coupling(config: SolverConfig, bounds: BoundEstimates, J: int) -> CouplingReport:
    lhs = (config.rho0 * config.gamma0) ** 2
    if bounds.C_f == 0:
        return CouplingReport(True, math.inf, lhs, math.inf, 0.0, J)
    rhs = J / (120.0 * bounds.C_f**2)
    return CouplingReport(lhs <= rhs, rhs - lhs, lhs, rhs, bounds.C_f, J)


def max_coupled_gamma(rho: float, bounds: BoundEstimates, J: int) -> float:
    """Largest ``gamma0`` satisfying the coupling condition for a given ``rho0``."""
    if bounds.C_f == 0:
        return math.inf
    return math.sqrt(J / 120.0) / (bounds.C_f * rho)


def max_coupled_rho(gamma: float, bounds: BoundEstimates, J: int) -> float:
    """Largest ``rho0`` satisfying the coupling condition for a given ``gamma0``."""
    return max_coupled_gamma(gamma, bounds, J)


def geometric_checkpoints(K: int) -> list:
    """Powers of two up to ``K``, plus ``K`` itself."""
    if K == 0:
        return [0]
    cps = []
    p = 1
    while p < K:
        cps.append(p)
        p *= 2
    cps.append(K)
    return cps


def linear_checkpoints(K: int, count: int) -> list:
    if K == 0:
        return [0]
    cps = sorted({int(round(K * i / count)) for i in range(1, count + 1)} - {0})
    return cps


@dataclass
class RunResult:
    state: SolverState
    xbar: np.ndarray
    trace: list
    wall_time: float
    config: SolverConfig
    lambda_sq_max: float
    coupling: Optional[CouplingReport] = None
    trajectory: Optional[dict] = field(default=None, repr=False)


def _use_kernel(instance, config):
    kd = instance.kernel_data
    eligible = kd is not None and kd["noise_mode"] >= 0
    if config.backend == "compiled" and not eligible:
        raise ConfigurationError("compiled backend needs an affine instance with additive or "
                                 "bilinear noise and quadratic constraints")
    return eligible and config.backend != "python"


def _run_kernel_segment(state, instance, config, noise, idx, lam_sq_max):
    kd = instance.kernel_data
    kind, lo, hi, center, radius = kd["base"]
    x, lam, sum_x = state.x.copy(), state.lam.copy(), state.sum_x.copy()
    sum_t, lam_sq_max = _kernels.rlsa_affine(
        kd["A"], kd["b"], kd["P"], kd["Q"], kd["R"], kind, lo, hi, center, radius,
        x, lam, sum_x, state.sum_t, state.k, config.rho0, config.gamma0,
        config.schedule == "decaying", noise, idx.astype(np.int64), lam_sq_max,
        kd["noise_mode"], kd["n1"])
    k = state.k + len(idx)
    rho_k, gamma_k, t_k = step_sizes(k - 1, config)
    if not np.all(np.isfinite(x)):
        raise OracleError(f"non-finite iterate after iteration {k}", iteration=k)
    return SolverState(k, x, lam, sum_x, sum_t, rho_k, gamma_k, t_k, int(idx[-1])), lam_sq_max


def run(instance: ProblemInstance, config: SolverConfig,
        trace_sink: Optional[Callable] = None, *,
        checkpoints: Optional[Sequence[int]] = None,
        gap: Optional[str] = "affine",
        bounds: Optional[BoundEstimates] = None,
        gap_options: Optional[dict] = None,
        record_trajectory: bool = False,
        timing: bool = True) -> RunResult:
    """Execute ``config.iters`` RLSA iterations.

    Parameters
    ----------
    trace_sink : callable, optional
        Receives each :class:`~rlsa.metrics.TraceRecord` as it is produced.
    checkpoints : sequence of int, optional
        Iteration counts at which metrics are recorded; defaults to
        :func:`geometric_checkpoints`. ``iters`` is always included.
    gap : {"affine", "sampled", None}
        Gap estimator evaluated at the ergodic average of each checkpoint.
    bounds : BoundEstimates, optional
        Used by the coupling check; defaults to :func:`certified_bounds`.
    record_trajectory : bool
        Keep every ``x_k``, ``lam_k`` and ``t_k`` (forces the Python loop).
    timing : bool
        When False the ``wall_ms`` column is written as 0 so traces are
        byte-reproducible.
    """
    from . import metrics

    config.validate()
    coupling = None
    if config.check_coupling:
        coupling = check_coupling(config, bounds or certified_bounds(instance), instance.J)
        if not coupling.passed:
            raise CouplingError(coupling.describe(), coupling)

    K = int(config.iters)
    cps = sorted({int(c) for c in (checkpoints or geometric_checkpoints(K)) if 0 <= c <= K} | {K})
    use_kernel = _use_kernel(instance, config) and not record_trajectory
    streams = RandomStreams(instance, config.noise_seed, config.index_seed)
    state = initial_state(instance, config)
    lam_sq_max = 0.0
    traj = {"x": [state.x.copy()], "lam": [state.lam.copy()], "t": [], "j": []} if record_trajectory else None
    trace = []
    gap_state = {"warm": None}
    opts = dict(gap_options or {})
    t_start = time.perf_counter()

    for cp in cps:
        while state.k < cp:
            m = min(cp - state.k, 1 << 16)
            noise, idx = streams.take(m)
            if use_kernel:
                state, lam_sq_max = _run_kernel_segment(state, instance, config, noise, idx, lam_sq_max)
            else:
                for s in range(m):
                    state = _advance(state, instance, config, noise[s], int(idx[s]))
                    lam_sq_max = max(lam_sq_max, float(state.lam @ state.lam))
                    if traj is not None:
                        traj["x"].append(state.x.copy())
                        traj["lam"].append(state.lam.copy())
                        traj["t"].append(state.t_k)
                        traj["j"].append(state.j_k)
        elapsed = (time.perf_counter() - t_start) * 1e3 if timing else 0.0
        rec = metrics.trace_record(instance, config, state, gap, gap_state, opts, elapsed)
        trace.append(rec)
        if trace_sink is not None:
            trace_sink(rec)

    if traj is not None:
        traj["t"].append(step_sizes(state.k, config)[2])
        traj = {k: np.array(v) for k, v in traj.items()}
    return RunResult(state, state.average(config), trace, time.perf_counter() - t_start,
                     config, lam_sq_max, coupling, traj)
