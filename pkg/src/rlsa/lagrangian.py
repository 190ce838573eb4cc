"""Penalized Lagrangian and the randomized-coordinate error terms.

For ``rho > 0`` the scalar penalty is::

    phi(u, v) = u v + rho u^2 / 2     if rho u + v >= 0
              = -v^2 / (2 rho)        otherwise

and ``Phi(x, lam) = mean_j phi(f_j(x), lam_j)``. Constraint indices are
0-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class PenaltyEval:
    value: float
    active: bool
    rho: float
    u: float
    v: float


def _check_rho(rho):
    if not rho > 0:
        raise InvalidArgumentError(f"rho must be positive, got {rho!r}")


def _check_lambda(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise InvalidArgumentError("multipliers must be nonnegative")
    return lam


def _check_index(j, J):
    if not 0 <= j < J:
        raise InvalidArgumentError(f"constraint index {j} out of range [0, {J})")


def phi(rho: float, u: float, v: float) -> PenaltyEval:
    _check_rho(rho)
    # the boundary rho*u + v == 0 belongs to the active branch
    if rho * u + v >= 0:
        return PenaltyEval(u * v + 0.5 * rho * u * u, True, rho, u, v)
    return PenaltyEval(-v * v / (2.0 * rho), False, rho, u, v)


def big_phi(rho, x, lam, instance) -> float:
    _check_rho(rho)
    lam = _check_lambda(lam)
    fx = instance.f(x)
    return float(np.mean([phi(rho, u, v).value for u, v in zip(fx, lam)]))


def _hinge_terms(rho, x, lam, instance):
    """Rows ``[rho f_j(x) + lam_j]_+ * grad f_j(x)``."""
    fx = instance.f(x)
    weights = np.maximum(rho * fx + lam, 0.0)
    return weights[:, None] * instance.grad_f(x)


def primal_subgrad_full(rho, x, lam, instance) -> np.ndarray:
    """The subgradient ``(1/J) sum_j [rho f_j(x) + lam_j]_+ grad f_j(x)`` of Phi in x."""
    _check_rho(rho)
    lam = _check_lambda(lam)
    return _hinge_terms(rho, x, lam, instance).mean(axis=0)


def primal_subgrad_coord(rho, x, lam, j, instance) -> np.ndarray:
    """Single-constraint estimator used by the primal step; unbiased over uniform j."""
    _check_rho(rho)
    lam = _check_lambda(lam)
    _check_index(j, instance.J)
    c = instance.constraints[j]
    w = max(rho * c.value(x) + lam[j], 0.0)
    return w * c.subgradient(x)


def delta_error(rho, x, lam, j, instance) -> np.ndarray:
    return primal_subgrad_coord(rho, x, lam, j, instance) - primal_subgrad_full(rho, x, lam, instance)


def delta_moments(rho, x, lam, instance):
    """Exact mean and second moment of ``delta`` over a uniform index.

    Enumerates every index, so no sampling error is involved.
    """
    _check_rho(rho)
    lam = _check_lambda(lam)
    terms = _hinge_terms(rho, x, lam, instance)
    deltas = terms - terms.mean(axis=0)
    return deltas.mean(axis=0), float(np.mean(np.sum(deltas**2, axis=1)))


def delta_variance_bound(rho, lam, C_f, D_f, J) -> float:
    lam = np.asarray(lam, dtype=float)
    return 2.0 * C_f**2 * (rho**2 * D_f**2 + float(lam @ lam) / J)


def subgrad_norm_bound(rho, lam, C_f, D_f, J) -> float:
    # same expression as the variance bound: 2 rho^2 D_f^2 C_f^2 + (2 C_f^2 / J) ||lam||^2
    return delta_variance_bound(rho, lam, C_f, D_f, J)


def dual_coord_value(rho, x, lam, j, instance) -> float:
    """``max(-lam_j / rho, f_j(x))``, the j-th coordinate of J * grad_lam Phi."""
    _check_rho(rho)
    lam = _check_lambda(lam)
    _check_index(j, instance.J)
    return max(-lam[j] / rho, instance.constraints[j].value(x))
