"""Seeded instance families.

Three families, each rebuilt bit-for-bit from an :class:`InstanceDescriptor`:

``affine-vi``
    ``F(x, xi) = (M + S) x + b + xi`` with ``M = G^T G`` of rank ``ceil(n/2)``
    (merely monotone), ``S`` skew and ``xi`` uniform on ``[-nu, nu]^n``.
    Constraints are balls ``||x - c_j||^2 <= r_j^2`` sharing a strictly
    interior point; ``b`` places the unconstrained zero of ``F`` outside the
    feasible set so that constraints are active at the solution.
``bilinear-minimax``
    ``H(u, v, xi) = u^T (Q + xi) v + a^T u - c^T v`` with ball constraints on
    each block separately; the VI mapping is ``(grad_u H, -grad_v H)``.
``nash-cournot``
    Player ``i`` picks a quantity ``x_i`` with cost
    ``c_i x_i + q_i x_i^2 - x_i (p0 - xi_i - beta sum_j x_j)``, subject to a
    capacity ``x_i <= cap_i`` and an emission budget ``kappa_i x_i^2 <= B_i``.

Functional forms and parameter ranges are artifact choices made for
hand-verifiability; they are documented here and in the README.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ProblemInstance, check_monotonicity, uniform_noise
from .errors import InstanceGenerationError, InvalidArgumentError
from .sets import Box, QuadraticConstraint, base_set_from_dict, constraint_from_dict

FAMILIES = ("affine-vi", "bilinear-minimax", "nash-cournot")
SLATER_MARGIN = 1e-3
MAX_RETRIES = 20


@dataclass(frozen=True)
class InstanceDescriptor:
    """Everything needed to regenerate an instance.

    JSON layout: ``{"family", "seed", "dims": {...}, "noise_level",
    "params": {...}}``. ``dims`` holds ``n`` and ``J`` (affine-vi),
    ``n1, n2, J1, J2`` (bilinear-minimax) or ``N`` (nash-cournot).
    ``params`` holds optional overrides; see the family constructors.
    """

    family: str
    seed: int = 0
    dims: dict = field(default_factory=dict)
    noise_level: float = 0.0
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceDescriptor":
        unknown = set(d) - {"family", "seed", "dims", "noise_level", "params"}
        if unknown:
            raise InvalidArgumentError(f"unknown descriptor fields: {sorted(unknown)}")
        if d.get("family") not in FAMILIES:
            raise InvalidArgumentError(f"family must be one of {FAMILIES}, got {d.get('family')!r}")
        return cls(d["family"], int(d.get("seed", 0)), dict(d.get("dims", {})),
                   float(d.get("noise_level", 0.0)), dict(d.get("params", {})))

    @classmethod
    def from_json(cls, text: str) -> "InstanceDescriptor":
        return cls.from_dict(json.loads(text))


def build(descriptor: InstanceDescriptor) -> ProblemInstance:
    d = descriptor
    if d.family == "affine-vi":
        return make_affine_vi(d.seed, d.dims.get("n", 2), d.dims.get("J", 2), d.noise_level, **d.params)
    if d.family == "bilinear-minimax":
        dims = {k: d.dims.get(k, 1) for k in ("n1", "n2", "J1", "J2")}
        return make_bilinear_minimax(d.seed, noise_level=d.noise_level, **dims, **d.params)
    if d.family == "nash-cournot":
        return make_nash_cournot(d.seed, d.dims.get("N", 2), noise_level=d.noise_level, **d.params)
    raise InvalidArgumentError(f"unknown family {d.family!r}")


def flatten_index(i: int, l: int, sizes) -> int:
    """Global constraint index of local constraint ``l`` of player ``i`` (0-based)."""
    if not (0 <= i < len(sizes) and 0 <= l < sizes[i]):
        raise InvalidArgumentError(f"(player {i}, constraint {l}) out of range for sizes {list(sizes)}")
    return l + int(sum(sizes[:i]))


def unflatten_index(j: int, sizes):
    for i, s in enumerate(sizes):
        if j < s:
            return i, j
        j -= s
    raise InvalidArgumentError("global index out of range")


def _check_slater(constraints, point, base_set):
    vals = np.array([c.value(point) for c in constraints])
    return base_set.contains(point) and bool(np.all(vals < -SLATER_MARGIN))


def _boundary_point(constraints, box, start, direction, iters=200):
    """Last feasible point on the ray ``start + t direction`` (bisection on ``t``)."""
    def feasible(t):
        x = start + t * direction
        return box.contains(x) and all(c.value(x) <= 0 for c in constraints)

    lo, hi = 0.0, 1.0
    while feasible(hi):
        lo, hi = hi, 2.0 * hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return start + lo * direction


def affine_instance(A, b, constraints, base_set, noise_level=0.0, reference=None,
                    descriptor=None, name="affine-vi"):
    """Affine VI with additive uniform noise, from explicit data."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)

    def mapping(x, xi, A=A, b=b):
        return A @ x + b + xi

    return ProblemInstance(base_set, constraints, mapping, uniform_noise(len(b), noise_level),
                           affine=(A, b), additive_noise=True, noise_level=noise_level,
                           reference=reference, descriptor=descriptor, name=name)


def make_affine_vi(seed: int, n: int, J: int, noise_level: float = 0.0, **params) -> ProblemInstance:
    """Random merely monotone affine VI with ``J`` ball constraints.

    Optional ``params``: ``rank`` (of ``M``), ``skew_scale``, ``radius``
    (mean ball radius), ``boundary_offset`` (signed distance, along a random
    ray from the Slater point, between the feasible boundary and the
    unconstrained zero ``z`` of ``F``; positive puts ``z`` outside so the
    crossed constraint has a positive multiplier, zero puts ``z`` on the
    boundary with a zero multiplier and ``(z, 0)`` is recorded as the
    reference KKT pair), ``margin`` (box padding). Passing
    ``explicit={"A", "b", "constraints", "base_set"[, "reference"]}`` bypasses
    generation entirely.
    """
    desc = InstanceDescriptor("affine-vi", seed, {"n": n, "J": J}, noise_level, dict(params))
    if "explicit" in params:
        e = params["explicit"]
        ref = e.get("reference")
        ref = None if ref is None else (np.array(ref[0]), np.array(ref[1]))
        return affine_instance(e["A"], e["b"], [constraint_from_dict(c) for c in e["constraints"]],
                               base_set_from_dict(e["base_set"]), noise_level, ref, desc.to_dict())
    if n < 1 or J < 1:
        raise InvalidArgumentError("n and J must be at least 1")
    rank = int(params.get("rank", math.ceil(n / 2)))
    skew_scale = float(params.get("skew_scale", 1.0))
    radius = float(params.get("radius", 1.0))
    offset = float(params.get("boundary_offset", 0.5))
    margin = float(params.get("margin", 0.25))
    rng = np.random.default_rng(np.random.SeedSequence([seed, n, J]))
    for _ in range(MAX_RETRIES):
        G = rng.standard_normal((rank, n)) / math.sqrt(n)
        K = rng.standard_normal((n, n)) * skew_scale / math.sqrt(n)
        A = G.T @ G + 0.5 * (K - K.T)
        slater = rng.uniform(-0.2, 0.2, n)
        radii = radius * rng.uniform(0.8, 1.2, J)
        dirs = rng.standard_normal((J, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        centers = slater + (rng.uniform(0.0, 0.5, J) * radii)[:, None] * dirs
        cons = [QuadraticConstraint.ball(c, r, label=f"ball{j}") for j, (c, r) in enumerate(zip(centers, radii))]
        lo = np.max(centers - radii[:, None], axis=0) - margin
        hi = np.min(centers + radii[:, None], axis=0) + margin
        if np.any(lo >= hi):
            continue
        box = Box(lo, hi)
        if not _check_slater(cons, slater, box):
            continue
        u = rng.standard_normal(n)
        u /= np.linalg.norm(u)
        z = _boundary_point(cons, box, slater, u) + offset * u
        b = -A @ z
        ref = (z, np.zeros(J)) if offset == 0.0 else None
        return affine_instance(A, b, cons, box, noise_level, ref, desc.to_dict())
    raise InstanceGenerationError(f"no Slater-feasible affine instance after {MAX_RETRIES} draws")


def rate_benchmark_descriptor(seed: int = 0, n: int = 5, J: int = 10,
                              noise_level: float = 0.1) -> InstanceDescriptor:
    """Affine VI whose solution sits on a ball boundary with a zero multiplier.

    Used for rate experiments: the gap then stays nonnegative even when the
    average is slightly infeasible, so both metrics can be fitted on a log
    scale. ``M`` has rank 2.
    """
    return InstanceDescriptor("affine-vi", seed, {"n": n, "J": J}, noise_level,
                              {"rank": min(2, n), "boundary_offset": 0.0})


def outward_start(instance: ProblemInstance, distance: float) -> np.ndarray:
    """``x* + distance * A n / ||A n||`` projected onto X.

    ``n`` is the unit outward normal of the most active constraint at the
    reference solution ``x*``. For the linear part of the dynamics the
    weighted transient sum of ``x_k - x*`` is close to ``A^{-1} (x_0 - x*)``,
    so this start makes the average approach ``x*`` from outside the
    feasible set, where the infeasibility metric is informative.
    """
    if instance.reference is None or instance.affine is None:
        raise InvalidArgumentError("outward_start needs an affine instance with a reference solution")
    x_star = instance.reference[0]
    j = int(np.argmax(instance.f(x_star)))
    normal = instance.grad_f(x_star)[j]
    v = instance.affine[0] @ (normal / np.linalg.norm(normal))
    return instance.base_set.project(x_star + distance * v / np.linalg.norm(v))


def scalar_kkt_instance(noise_level: float = 0.0) -> ProblemInstance:
    """``F(y) = y - 2`` on ``[-3, 3]`` with ``y - 1 <= 0``; KKT pair ``(1, 1)``."""
    explicit = {"A": [[1.0]], "b": [-2.0],
                "constraints": [QuadraticConstraint.halfspace([1.0], 1.0).to_dict()],
                "base_set": Box([-3.0], [3.0]).to_dict(),
                "reference": [[1.0], [1.0]]}
    return make_affine_vi(0, 1, 1, noise_level, explicit=explicit)


def _block_ball(center, radius, offset, n_total, label):
    """Ball constraint acting on coordinates ``offset : offset + len(center)`` only."""
    k = len(center)
    p = np.zeros(n_total)
    q = np.zeros(n_total)
    p[offset:offset + k] = 2.0
    q[offset:offset + k] = -2.0 * np.asarray(center)
    return QuadraticConstraint(p, q, float(np.dot(center, center) - radius**2), label)


def make_bilinear_minimax(seed: int, n1: int, n2: int, J1: int, J2: int,
                          noise_level: float = 0.0, **params) -> ProblemInstance:
    """Constrained bilinear saddle problem in VI form.

    ``U = [-1, 1]^n1`` and ``V = [-1, 1]^n2``; each block carries its own
    ball constraints. Optional explicit ``params``: ``Q`` (n1 x n2), ``a``,
    ``c``, ``u_balls``/``v_balls`` as lists of ``[center, radius]``.
    """
    if min(n1, n2, J1, J2) < 1:
        raise InvalidArgumentError("all bilinear-minimax dimensions must be at least 1")
    desc = InstanceDescriptor("bilinear-minimax", seed, {"n1": n1, "n2": n2, "J1": J1, "J2": J2},
                              noise_level, dict(params))
    rng = np.random.default_rng(np.random.SeedSequence([seed, n1, n2, J1, J2, 7]))
    n = n1 + n2
    Q = np.array(params["Q"], dtype=float) if "Q" in params else rng.standard_normal((n1, n2)) / math.sqrt(n2)
    a = np.array(params["a"], dtype=float) if "a" in params else rng.uniform(-0.5, 0.5, n1)
    c = np.array(params["c"], dtype=float) if "c" in params else rng.uniform(-0.5, 0.5, n2)

    def balls(key, dim, count):
        if key in params:
            return [(np.atleast_1d(np.array(cc, dtype=float)), float(r)) for cc, r in params[key]]
        out = []
        for _ in range(count):
            r = rng.uniform(0.6, 0.9)
            d = rng.standard_normal(dim)
            out.append((0.3 * r * d / np.linalg.norm(d), r))
        return out

    u_balls = balls("u_balls", n1, J1)
    v_balls = balls("v_balls", n2, J2)
    cons = [_block_ball(cc, r, 0, n, f"u_ball{l}") for l, (cc, r) in enumerate(u_balls)]
    cons += [_block_ball(cc, r, n1, n, f"v_ball{l}") for l, (cc, r) in enumerate(v_balls)]
    box = Box(-np.ones(n), np.ones(n))
    if not _check_slater(cons, np.zeros(n), box):
        raise InstanceGenerationError("bilinear-minimax constraints have no common interior point at 0")
    A = np.block([[np.zeros((n1, n1)), Q], [-Q.T, np.zeros((n2, n2))]])
    b = np.concatenate([a, c])

    def mapping(x, xi, Q=Q, a=a, c=c):
        Qx = Q + xi.reshape(n1, n2)
        u, v = x[:n1], x[n1:]
        return np.concatenate([Qx @ v + a, -(Qx.T @ u) + c])

    return ProblemInstance(box, cons, mapping, uniform_noise(n1 * n2, noise_level),
                           affine=(A, b), bilinear_split=n1, noise_level=noise_level,
                           descriptor=desc.to_dict(), name="bilinear-minimax")


def make_nash_cournot(seed: int, N: int, caps=None, noise_level: float = 0.0, **params) -> ProblemInstance:
    """Cournot oligopoly with quadratic costs and linear inverse demand.

    The game mapping is ``F_i(x) = c_i + 2 q_i x_i - p0 + beta (sum_j x_j + x_i)``
    and its Jacobian ``diag(2q + beta) + beta 11^T`` is positive definite.
    ``caps`` (scalar or per player) sets the capacity constraints; when
    omitted they are placed 50% above the unconstrained equilibrium. With
    ``symmetric=True`` all players share ``c, q, kappa, budget``. Other
    ``params``: ``p0`` (10), ``beta`` (1), ``c``, ``q``, ``kappa``, ``budget``.
    Constraint ``2 i`` is player i's capacity and ``2 i + 1`` its budget.
    """
    if N < 2:
        raise InvalidArgumentError("a Cournot game needs at least two players")
    desc = InstanceDescriptor("nash-cournot", seed, {"N": N}, noise_level,
                              {"caps": caps, **params} if caps is not None else dict(params))
    rng = np.random.default_rng(np.random.SeedSequence([seed, N, 11]))
    p0 = float(params.get("p0", 10.0))
    beta = float(params.get("beta", 1.0))
    sym = bool(params.get("symmetric", False))

    def per_player(key, lo, hi):
        if key in params:
            return np.broadcast_to(np.asarray(params[key], dtype=float), (N,)).copy()
        return np.full(N, rng.uniform(lo, hi)) if sym else rng.uniform(lo, hi, N)

    for _ in range(MAX_RETRIES):
        c = per_player("c", 0.5, 2.0)
        q = per_player("q", 0.25, 1.0)
        kappa = per_player("kappa", 0.05, 0.2)
        A = np.diag(2.0 * q + beta) + beta * np.ones((N, N))
        b = c - p0
        x_free = np.linalg.solve(A, -b)
        cap = (1.5 * np.maximum(x_free, 0.1) if caps is None
               else np.broadcast_to(np.asarray(caps, dtype=float), (N,)).copy())
        budget = per_player("budget", 0.0, 0.0) if "budget" in params else kappa * (2.0 * np.maximum(cap, x_free)) ** 2
        cons = []
        for i in range(N):
            e = np.zeros(N)
            e[i] = 1.0
            cons.append(QuadraticConstraint.halfspace(e, cap[i], label=f"capacity{i}"))
            cons.append(QuadraticConstraint(2.0 * kappa[i] * e, np.zeros(N), -budget[i], label=f"budget{i}"))
        box = Box(np.zeros(N), np.full(N, p0 / beta))
        slater = np.full(N, 0.5) * np.minimum(cap, np.sqrt(budget / kappa))
        if np.any(cap <= 0) or not _check_slater(cons, slater, box):
            if caps is not None or sym:
                raise InstanceGenerationError("capacities must be positive for a Slater point to exist")
            continue
        inst = affine_instance(A, b, cons, box, noise_level, descriptor=desc.to_dict(), name="nash-cournot")
        if not check_monotonicity(inst, 2000, 1e-10, rng=seed).passed:
            continue
        return inst
    raise InstanceGenerationError(f"no valid Cournot instance after {MAX_RETRIES} draws")


def cournot_sizes(N: int):
    """Constraints per player for :func:`make_nash_cournot`."""
    return [2] * N


def default_zoo(noise_level: float = 0.0):
    """Small instances covering all three families (used by ``validate``)."""
    return {
        "affine-vi(2,4)": make_affine_vi(1, 2, 4, noise_level),
        "affine-vi(5,10)": make_affine_vi(0, 5, 10, noise_level),
        "bilinear-minimax(2,2)": make_bilinear_minimax(3, 2, 2, 2, 2, noise_level),
        "nash-cournot(3)": make_nash_cournot(5, 3, noise_level=noise_level),
        "scalar-kkt": scalar_kkt_instance(noise_level),
    }
