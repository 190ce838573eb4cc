"""Base sets with closed-form projections and the functional constraint types.

The base set ``X`` is always a box or a Euclidean ball. Functional
constraints come in two flavours:

* :class:`QuadraticConstraint` -- ``f(x) = 0.5 x^T diag(p) x + q^T x + r``
  with ``p >= 0``. Covers balls, halfspaces and per-coordinate ramps, has an
  exact projection and exact bounds over a box, and is what the compiled
  kernels understand.
* :class:`FunctionConstraint` -- arbitrary convex callables with a
  subgradient selection. Projection falls back to cutting planes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = _frozen(np.atleast_1d(self.lower)), _frozen(np.atleast_1d(self.upper))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidArgumentError("box bounds must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidArgumentError("box bounds must be finite")
        if np.any(lo > hi):
            raise InvalidArgumentError("box is empty: some lower bound exceeds its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    kind = _kernels.BOX

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def project(self, y):
        return np.clip(np.asarray(y, dtype=float), self.lower, self.upper)

    def contains(self, x, tol=0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def max_norm(self) -> float:
        """Exact ``sup_{x in X} ||x||``."""
        return float(np.linalg.norm(np.maximum(np.abs(self.lower), np.abs(self.upper))))

    def bounding_box(self):
        return self.lower, self.upper

    def sample(self, rng, size: int) -> np.ndarray:
        return self.lower + (self.upper - self.lower) * rng.random((size, self.dim))

    def vertices(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lower, self.upper))))

    def kernel_args(self):
        z = np.zeros(self.dim)
        return self.kind, self.lower, self.upper, z, 0.0

    def to_dict(self):
        return {"type": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = _frozen(np.atleast_1d(self.center))
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise InvalidArgumentError("ball center must be a finite 1-D array")
        r = float(self.radius)
        if not np.isfinite(r) or r < 0:
            raise InvalidArgumentError("ball radius must be finite and nonnegative")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)

    kind = _kernels.BALL

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def project(self, y):
        y = np.asarray(y, dtype=float)
        d = y - self.center
        nrm = np.linalg.norm(d)
        if nrm <= self.radius:
            return y.copy()
        return self.center + (self.radius / nrm) * d

    def contains(self, x, tol=0.0) -> bool:
        return bool(np.linalg.norm(np.asarray(x, dtype=float) - self.center) <= self.radius + tol)

    def max_norm(self) -> float:
        return float(np.linalg.norm(self.center) + self.radius)

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def sample(self, rng, size: int) -> np.ndarray:
        # direction from a normalized Gaussian, radius r * u^(1/n)
        g = rng.standard_normal((size, self.dim))
        u = rng.random(size)
        nrm = np.linalg.norm(g, axis=1)
        nrm[nrm == 0.0] = 1.0
        return self.center + (self.radius * u ** (1.0 / self.dim) / nrm)[:, None] * g

    def kernel_args(self):
        return self.kind, self.center, self.center, self.center, self.radius

    def to_dict(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


def base_set_from_dict(d):
    if d["type"] == "box":
        return Box(d["lower"], d["upper"])
    if d["type"] == "ball":
        return Ball(d["center"], d["radius"])
    raise InvalidArgumentError(f"unknown base set type {d['type']!r}")


@dataclass(frozen=True, eq=False)
class QuadraticConstraint:
    """``f(x) = 0.5 * sum_i p_i x_i**2 + q^T x + r`` with ``p >= 0``."""

    p: np.ndarray
    q: np.ndarray
    r: float
    label: str = ""

    def __post_init__(self):
        p, q = _frozen(np.atleast_1d(self.p)), _frozen(np.atleast_1d(self.q))
        if p.shape != q.shape:
            raise InvalidArgumentError("p and q must have the same shape")
        if np.any(p < 0):
            raise InvalidArgumentError("quadratic constraint must be convex (p >= 0)")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", float(self.r))

    @classmethod
    def ball(cls, center, radius, label="ball"):
        """``||x - center||^2 - radius^2``."""
        c = np.asarray(center, dtype=float)
        return cls(np.full(c.shape, 2.0), -2.0 * c, float(c @ c - radius**2), label)

    @classmethod
    def halfspace(cls, a, beta, label="halfspace"):
        """``a^T x - beta``."""
        a = np.asarray(a, dtype=float)
        return cls(np.zeros(a.shape), a, -float(beta), label)

    @property
    def dim(self) -> int:
        return self.p.shape[0]

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.sum((0.5 * self.p * x + self.q) * x) + self.r)

    def subgradient(self, x) -> np.ndarray:
        return self.p * np.asarray(x, dtype=float) + self.q

    def project(self, y) -> np.ndarray:
        y = np.ascontiguousarray(y, dtype=float)
        out = np.empty_like(y)
        _kernels.project_quad(self.p, self.q, self.r, y, out)
        return out

    def box_bounds(self, lower, upper):
        """Exact ``(min f, max f, max ||grad f||)`` over the box ``[lower, upper]``.

        The constraint is separable, so each coordinate is optimized on its
        interval independently.
        """
        lo, hi = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)

        def term(x):
            return (0.5 * self.p * x + self.q) * x

        cands = [term(lo), term(hi)]
        with np.errstate(divide="ignore", invalid="ignore"):
            vertex = np.where(self.p > 0, -self.q / np.where(self.p > 0, self.p, 1.0), lo)
        inside = (vertex > lo) & (vertex < hi)
        tmin = np.minimum(cands[0], cands[1])
        tmin = np.where(inside, np.minimum(tmin, term(np.clip(vertex, lo, hi))), tmin)
        tmax = np.maximum(cands[0], cands[1])
        gmax = np.maximum(np.abs(self.p * lo + self.q), np.abs(self.p * hi + self.q))
        return (float(tmin.sum() + self.r), float(tmax.sum() + self.r),
                float(np.linalg.norm(gmax)))

    def to_dict(self):
        return {"type": "quadratic", "p": self.p.tolist(), "q": self.q.tolist(),
                "r": self.r, "label": self.label}


@dataclass(frozen=True, eq=False)
class FunctionConstraint:
    """A convex constraint given only by value and subgradient oracles.

    Projection onto ``{f <= 0}`` uses outer cutting planes: the point is
    projected onto the polyhedron cut out by the accumulated subgradient
    halfspaces, a new cut is added at the result, and so on. The polyhedron
    contains the sublevel set, so once its projection is feasible it is the
    exact projection. A final bisection towards ``interior_point`` (a point
    with ``f < 0``) guarantees a feasible return value when the cut budget
    runs out.
    """

    fun: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    interior_point: Optional[np.ndarray] = None
    label: str = ""
    max_cuts: int = 200
    tol: float = 1e-12

    def value(self, x) -> float:
        return float(self.fun(np.asarray(x, dtype=float)))

    def subgradient(self, x) -> np.ndarray:
        return np.asarray(self.grad(np.asarray(x, dtype=float)), dtype=float)

    def project(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.value(y) <= 0.0:
            return y.copy()
        A, b = [], []
        x = y.copy()
        for _ in range(self.max_cuts):
            fx = self.value(x)
            if fx <= self.tol:
                break
            g = self.subgradient(x)
            A.append(g)
            b.append(g @ x - fx)
            x = _project_polyhedron(y, np.array(A), np.array(b))
        if self.value(x) > 0.0 and self.interior_point is not None:
            x = self._bisect_to_boundary(x)
        return x

    def _bisect_to_boundary(self, x):
        inner = np.asarray(self.interior_point, dtype=float)
        lo, hi = 0.0, 1.0  # fraction of the way from x towards inner
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if self.value(x + mid * (inner - x)) <= 0.0:
                hi = mid
            else:
                lo = mid
        return x + hi * (inner - x)


def _project_polyhedron(y, A, b, tol=1e-14, max_cycles=10_000):
    """Dykstra projection onto ``{x : A x <= b}``."""
    x = y.copy()
    incr = np.zeros_like(A)
    nrm2 = np.einsum("ij,ij->i", A, A)
    for _ in range(max_cycles):
        prev = x.copy()
        for i in range(A.shape[0]):
            z = x + incr[i]
            viol = A[i] @ z - b[i]
            w = z - (viol / nrm2[i]) * A[i] if viol > 0 and nrm2[i] > 0 else z
            incr[i] = z - w
            x = w
        if np.linalg.norm(x - prev) < tol:
            break
    return x


def constraint_from_dict(d):
    if d["type"] == "quadratic":
        return QuadraticConstraint(d["p"], d["q"], d["r"], d.get("label", ""))
    raise InvalidArgumentError(f"cannot rebuild constraint of type {d['type']!r} from data")
