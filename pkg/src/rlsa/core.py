"""Problem instances: stochastic mapping, functional constraints, base set.

A :class:`ProblemInstance` is immutable and its oracles are pure functions of
their inputs, so one instance can be shared by any number of concurrent runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, OracleError
from .sets import Ball, Box, QuadraticConstraint

DEFAULT_SAFETY = 1.25

Mapping = Callable[[np.ndarray, np.ndarray], np.ndarray]
NoiseSampler = Callable[[np.random.Generator, int], np.ndarray]


def zero_noise(dim: int) -> NoiseSampler:
    def sample(rng, size):
        return np.zeros((size, dim))
    return sample


def uniform_noise(dim: int, level: float) -> NoiseSampler:
    """Independent uniform noise on ``[-level, level]^dim``."""
    def sample(rng, size):
        if level == 0.0:
            return np.zeros((size, dim))
        return rng.uniform(-level, level, size=(size, dim))
    return sample


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A constrained stochastic monotone VI.

    Parameters
    ----------
    base_set : Box or Ball
        The easy-to-project set ``X``.
    constraints : sequence
        Functional constraints ``f_j``; each exposes ``value``,
        ``subgradient`` and ``project``.
    mapping : callable
        ``mapping(x, noise) -> F(x, noise)``.
    noise_sampler : callable
        ``noise_sampler(rng, size)`` returns ``size`` noise draws as rows.
    mean_mapping : callable, optional
        Exact ``F(x)``. When omitted the mean is a sample average over a
        fixed batch of ``mean_samples`` noise draws (seeded, so still pure).
    affine : (A, b), optional
        Declares ``F(x) = A x + b``; enables the exact gap oracle.
    additive_noise : bool
        Declares ``F(x, xi) = F(x) + xi``; together with ``affine`` and
        quadratic constraints this enables the compiled solver loop.
    bilinear_split : int, optional
        Declares ``F(x, xi) = F(x) + [[0, Xi], [-Xi^T, 0]] x`` with
        ``Xi = xi.reshape(n1, n - n1)`` and ``n1 = bilinear_split`` (the noise
        model of bilinear saddle problems); also enables the compiled loop.
    reference : (x_star, lambda_star), optional
        A known KKT pair.
    """

    base_set: Box | Ball
    constraints: Sequence
    mapping: Mapping
    noise_sampler: NoiseSampler
    mean_mapping: Optional[Callable[[np.ndarray], np.ndarray]] = None
    affine: Optional[tuple] = None
    additive_noise: bool = False
    bilinear_split: Optional[int] = None
    noise_level: float = 0.0
    reference: Optional[tuple] = None
    descriptor: Optional[dict] = None
    name: str = "instance"
    mean_samples: int = 1000
    _mean_noise: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.n < 1:
            raise InvalidArgumentError("dimension must be at least 1")
        if self.J < 1:
            raise InvalidArgumentError("at least one functional constraint is required")
        if not isinstance(self.base_set, (Box, Ball)):
            raise InvalidArgumentError("base set must be a Box or a Ball")
        if self.affine is not None:
            A, b = (np.array(a, dtype=float) for a in self.affine)
            if A.shape != (self.n, self.n) or b.shape != (self.n,):
                raise InvalidArgumentError("affine data must be A (n, n) and b (n,)")
            A.setflags(write=False)
            b.setflags(write=False)
            object.__setattr__(self, "affine", (A, b))
        if self.reference is not None:
            xs, ls = (np.array(a, dtype=float) for a in self.reference)
            object.__setattr__(self, "reference", (xs, ls))
        draws = self.noise_sampler(np.random.default_rng(0x5EED), self.mean_samples)
        draws.setflags(write=False)
        object.__setattr__(self, "_mean_noise", draws)
        self._check_constraints_finite()

    def _check_constraints_finite(self):
        rng = np.random.default_rng(12345)
        pts = self.base_set.sample(rng, 32)
        for x in pts:
            for j, c in enumerate(self.constraints):
                v = c.value(x)
                if not np.isfinite(v):
                    raise InvalidArgumentError(f"constraint {j} is not finite on the base set")

    @property
    def n(self) -> int:
        return self.base_set.dim

    @property
    def J(self) -> int:
        return len(self.constraints)

    def F(self, x) -> np.ndarray:
        """Mean mapping ``F(x) = E[F(x, xi)]``."""
        x = np.asarray(x, dtype=float)
        if self.affine is not None:
            A, b = self.affine
            return A @ x + b
        if self.mean_mapping is not None:
            return np.asarray(self.mean_mapping(x), dtype=float)
        return np.mean([self.mapping(x, xi) for xi in self._mean_noise], axis=0)

    def sample_noise(self, rng, size: int) -> np.ndarray:
        return self.noise_sampler(rng, size)

    def f(self, x) -> np.ndarray:
        """Vector of constraint values ``(f_1(x), ..., f_J(x))``."""
        return np.array([c.value(x) for c in self.constraints])

    def grad_f(self, x) -> np.ndarray:
        """Rows are the subgradient selections ``grad f_j(x)``."""
        return np.array([c.subgradient(x) for c in self.constraints])

    @cached_property
    def kernel_data(self):
        """Arrays for the compiled loops, or None if the instance is not eligible.

        Eligible instances have an affine mean mapping and only quadratic
        constraints. ``noise_mode`` is 0 for additive noise, 1 for the
        bilinear model and -1 when the compiled loop cannot reproduce the
        stochastic mapping.
        """
        if self.affine is None:
            return None
        if not all(isinstance(c, QuadraticConstraint) for c in self.constraints):
            return None
        P = np.array([c.p for c in self.constraints])
        Q = np.array([c.q for c in self.constraints])
        R = np.array([c.r for c in self.constraints])
        A, b = self.affine
        mode = 0 if self.additive_noise else (1 if self.bilinear_split is not None else -1)
        return {"A": np.ascontiguousarray(A), "b": np.ascontiguousarray(b),
                "P": P, "Q": Q, "R": R, "base": self.base_set.kernel_args(),
                "noise_mode": mode, "n1": int(self.bilinear_split or 0)}


def evaluate_mapping(instance: ProblemInstance, x, noise) -> np.ndarray:
    """``F(x, noise)`` with a finiteness check on the output."""
    out = np.asarray(instance.mapping(np.asarray(x, dtype=float), np.asarray(noise, dtype=float)),
                     dtype=float)
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        i = int(bad[0])
        raise OracleError(f"mapping returned non-finite value {out[i]!r} at coordinate {i}",
                          coordinate=i)
    return out


def project_base(instance: ProblemInstance, y) -> np.ndarray:
    return instance.base_set.project(y)


@dataclass(frozen=True)
class BoundEstimates:
    """Constants of the convergence analysis.

    ``C_F`` bounds ``||F(x)||``, ``C_f`` bounds subgradient norms, ``D_f``
    bounds ``|f_j(x)|``, ``D_X`` bounds ``||x||`` over ``X`` and ``nu2``
    bounds the noise second moment. ``samples`` records how many points
    produced them (0 for analytic values).
    """

    C_F: float
    C_f: float
    D_f: float
    D_X: float
    nu2: float
    samples: int = 0
    method: str = "sampled"


def _sample_points(base_set, rng, budget, block=256):
    # fixed-size blocks keep the first m points identical for every budget >= m
    nblocks = -(-budget // block)
    pts = np.concatenate([base_set.sample(rng, block) for _ in range(nblocks)])
    return pts[:budget]


def estimate_bounds(instance: ProblemInstance, sample_budget: int, rng=None,
                    safety: float = DEFAULT_SAFETY, noise_draws: int = 16) -> BoundEstimates:
    """Empirical bound constants, inflated by ``safety``.

    Points are drawn uniformly from the base set; ``nu2`` is the largest
    per-point mean of ``||F(x, xi) - F(x)||^2`` over ``noise_draws`` draws.
    Raising the budget with the same seed only adds points, so every field is
    nondecreasing in ``sample_budget``.
    """
    if sample_budget < 1:
        raise InvalidArgumentError("sample_budget must be at least 1")
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(0 if rng is None else int(rng))
    point_rng, noise_rng = rng.spawn(2)
    pts = _sample_points(instance.base_set, point_rng, sample_budget)
    CF = Cf = Df = DX = nu2 = 0.0
    for x in pts:
        Fx = instance.F(x)
        CF = max(CF, float(np.linalg.norm(Fx)))
        DX = max(DX, float(np.linalg.norm(x)))
        for c in instance.constraints:
            Df = max(Df, abs(c.value(x)))
            Cf = max(Cf, float(np.linalg.norm(c.subgradient(x))))
        xis = instance.sample_noise(noise_rng, noise_draws)
        dev = np.mean([np.sum((instance.mapping(x, xi) - Fx) ** 2) for xi in xis])
        nu2 = max(nu2, float(dev))
    s = safety
    return BoundEstimates(s * CF, s * Cf, s * Df, s * DX, s * nu2, samples=sample_budget)


def certified_bounds(instance: ProblemInstance, grid_per_axis: int = 64) -> BoundEstimates:
    """Upper bounds on ``C_f``, ``D_f``, ``D_X`` valid on all of ``X``.

    Quadratic constraints are bounded exactly over the bounding box of ``X``
    (separable in the coordinates). Other constraints fall back to a dense
    grid plus the box vertices, which is exact for the convex subgradient
    norm maxima only when they are attained at vertices; for generic
    constraints treat the result as an estimate. ``C_F`` and ``nu2`` are
    taken from :func:`estimate_bounds` with no safety factor.
    """
    lo, hi = instance.base_set.bounding_box()
    Cf = Df = 0.0
    generic = []
    for c in instance.constraints:
        if isinstance(c, QuadraticConstraint):
            fmin, fmax, gmax = c.box_bounds(lo, hi)
            Df = max(Df, abs(fmin), abs(fmax))
            Cf = max(Cf, gmax)
        else:
            generic.append(c)
    if generic:
        axes = [np.linspace(a, b, grid_per_axis) for a, b in zip(lo, hi)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
        for x in mesh:
            for c in generic:
                Df = max(Df, abs(c.value(x)))
                Cf = max(Cf, float(np.linalg.norm(c.subgradient(x))))
    rough = estimate_bounds(instance, 512, rng=0, safety=1.0)
    if instance.affine is not None:
        # ||A x + b|| is convex, so its max over a box sits at a vertex
        A, b = instance.affine
        verts = Box(lo, hi).vertices() if len(lo) <= 12 else None
        CF = rough.C_F if verts is None else float(np.max(np.linalg.norm(verts @ A.T + b, axis=1)))
    else:
        CF = rough.C_F
    return BoundEstimates(CF, Cf, Df, instance.base_set.max_norm(), rough.nu2,
                          samples=0, method="certified")


@dataclass(frozen=True)
class MonotonicityReport:
    passed: bool
    min_value: float
    witness: Optional[tuple]
    pairs: int
    tol: float


def check_monotonicity(instance: ProblemInstance, pair_budget: int = 10_000, tol: float = 1e-10,
                       rng=None) -> MonotonicityReport:
    """Sample pairs in ``X`` and report the smallest ``<F(x) - F(y), x - y>``."""
    if pair_budget < 1:
        raise InvalidArgumentError("pair_budget must be at least 1")
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(0 if rng is None else int(rng))
    xs = _sample_points(instance.base_set, rng, pair_budget)
    ys = _sample_points(instance.base_set, rng, pair_budget)
    if instance.affine is not None:
        A, b = instance.affine
        vals = np.einsum("ij,ij->i", (xs - ys) @ A.T, xs - ys)
    else:
        vals = np.array([(instance.F(x) - instance.F(y)) @ (x - y) for x, y in zip(xs, ys)])
    i = int(np.argmin(vals))
    m = float(vals[i])
    passed = m >= -tol
    return MonotonicityReport(passed, m, None if passed else (xs[i], ys[i]), pair_budget, tol)
