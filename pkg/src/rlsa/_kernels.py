"""Compiled inner loops for instances built from diagonal-quadratic constraints.

Every zoo constraint has the form ``f(x) = sum_i 0.5 * p_i x_i**2 + q^T x + r``
with ``p >= 0``; a family of ``J`` of them is stored as arrays ``P (J, n)``,
``Q (J, n)`` and ``R (J,)``. Base sets are encoded as ``kind`` (0 box, 1 ball)
plus ``lo, hi`` (box) and ``center, radius`` (ball).

The Python-level modules call these through thin wrappers; the pure-Python
paths in :mod:`rlsa.solver` and :mod:`rlsa.baselines` are the references they
are tested against.
"""

import math

import numpy as np
from numba import njit

BOX = 0
BALL = 1


@njit(cache=True)
def project_base(kind, y, lo, hi, center, radius, out):
    n = y.shape[0]
    if kind == BOX:
        for i in range(n):
            v = y[i]
            if v < lo[i]:
                v = lo[i]
            elif v > hi[i]:
                v = hi[i]
            out[i] = v
    else:
        d2 = 0.0
        for i in range(n):
            d = y[i] - center[i]
            d2 += d * d
        d = math.sqrt(d2)
        if d <= radius:
            for i in range(n):
                out[i] = y[i]
        else:
            s = radius / d
            for i in range(n):
                out[i] = center[i] + s * (y[i] - center[i])


@njit(cache=True)
def quad_value(P, Q, R, j, x):
    s = R[j]
    for i in range(x.shape[0]):
        s += (0.5 * P[j, i] * x[i] + Q[j, i]) * x[i]
    return s


@njit(cache=True)
def quad_grad(P, Q, j, x, out):
    for i in range(x.shape[0]):
        out[i] = P[j, i] * x[i] + Q[j, i]


@njit(cache=True)
def project_quad(p, q, r, y, out):
    """Nearest point of ``{x : 0.5 x^T diag(p) x + q^T x + r <= 0}`` to ``y``.

    Closed form for halfspaces (p == 0) and balls (p constant); otherwise the
    multiplier of the stationarity system ``x = (y - mu q) / (1 + mu p)`` is
    located by bisection.
    """
    n = y.shape[0]
    fy = r
    for i in range(n):
        fy += (0.5 * p[i] * y[i] + q[i]) * y[i]
    if fy <= 0.0:
        for i in range(n):
            out[i] = y[i]
        return
    pmin = p[0]
    pmax = p[0]
    for i in range(1, n):
        pmin = min(pmin, p[i])
        pmax = max(pmax, p[i])
    if pmax == 0.0:
        qq = 0.0
        for i in range(n):
            qq += q[i] * q[i]
        if qq == 0.0:
            # constant positive constraint: empty set, leave y unchanged
            for i in range(n):
                out[i] = y[i]
            return
        s = fy / qq
        for i in range(n):
            out[i] = y[i] - s * q[i]
        return
    if pmin == pmax:
        a = pmin
        qq = 0.0
        for i in range(n):
            qq += q[i] * q[i]
        rad2 = 2.0 * (qq / (2.0 * a) - r) / a
        rad = math.sqrt(max(rad2, 0.0))
        d2 = 0.0
        for i in range(n):
            d = y[i] + q[i] / a
            d2 += d * d
        d = math.sqrt(d2)
        s = rad / d
        for i in range(n):
            c = -q[i] / a
            out[i] = c + s * (y[i] - c)
        return
    lo = 0.0
    hi = 1.0
    for _ in range(200):
        f = r
        for i in range(n):
            xi = (y[i] - hi * q[i]) / (1.0 + hi * p[i])
            f += (0.5 * p[i] * xi + q[i]) * xi
        if f <= 0.0:
            break
        lo = hi
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f = r
        for i in range(n):
            xi = (y[i] - mid * q[i]) / (1.0 + mid * p[i])
            f += (0.5 * p[i] * xi + q[i]) * xi
        if f > 0.0:
            lo = mid
        else:
            hi = mid
    for i in range(n):
        out[i] = (y[i] - hi * q[i]) / (1.0 + hi * p[i])


@njit(cache=True)
def dykstra(y, kind, lo, hi, center, radius, P, Q, R, tol, max_cycles, out):
    """Dykstra's cyclic projections onto the constraint sets, then the base set.

    Returns ``(cycles, last_move)``; convergence means the iterate moved less
    than ``tol`` over a cycle and every constraint is violated by at most tol.
    """
    n = y.shape[0]
    J = P.shape[0]
    incr = np.zeros((J + 1, n))
    x = y.copy()
    prev = y.copy()
    z = np.empty(n)
    w = np.empty(n)
    move = np.inf
    cycles = 0
    while cycles < max_cycles:
        cycles += 1
        for i in range(n):
            prev[i] = x[i]
        for s in range(J + 1):
            for i in range(n):
                z[i] = x[i] + incr[s, i]
            if s < J:
                project_quad(P[s], Q[s], R[s], z, w)
            else:
                project_base(kind, z, lo, hi, center, radius, w)
            for i in range(n):
                incr[s, i] = z[i] - w[i]
                x[i] = w[i]
        m2 = 0.0
        for i in range(n):
            d = x[i] - prev[i]
            m2 += d * d
        move = math.sqrt(m2)
        if move < tol:
            worst = 0.0
            for j in range(J):
                worst = max(worst, quad_value(P, Q, R, j, x))
            if worst <= tol:
                break
    for i in range(n):
        out[i] = x[i]
    return cycles, move


@njit(cache=True)
def schedule(k, rho, gamma, decaying):
    if not decaying:
        return rho, gamma, 1.0
    if k == 0:
        return rho, gamma, 1.0
    d = math.sqrt(k + 1.0) * math.log(k + 1.0)
    return min(rho / d, rho), min(gamma / d, gamma), min(1.0 / d, 1.0)


@njit(cache=True)
def rlsa_affine(A, b, P, Q, R, kind, lo, hi, center, radius,
                x, lam, sum_x, sum_t, k0, rho, gamma, decaying,
                noise, idx, lam_sq_max, noise_mode, n1):
    """Run ``len(idx)`` RLSA steps in place on ``x``, ``lam`` and ``sum_x``.

    The mapping is ``A x + b + noise[s]`` for ``noise_mode == 0``; for
    ``noise_mode == 1`` it is ``A x + b + [[0, Xi], [-Xi^T, 0]] x`` with
    ``Xi = noise[s].reshape(n1, n - n1)``. Returns the updated ``sum_t`` and
    the running maximum of ``||lam||^2``.
    """
    n = x.shape[0]
    J = lam.shape[0]
    g = np.empty(n)
    y = np.empty(n)
    for s in range(idx.shape[0]):
        rho_k, gamma_k, t_k = schedule(k0 + s, rho, gamma, decaying)
        for i in range(n):
            sum_x[i] += t_k * x[i]
        sum_t += t_k
        j = idx[s]
        v = rho_k * quad_value(P, Q, R, j, x) + lam[j]
        lam[j] = v if v > 0.0 else 0.0
        quad_grad(P, Q, j, x, g)
        n2 = n - n1
        for i in range(n):
            Fi = b[i]
            if noise_mode == 0:
                Fi += noise[s, i]
            elif i < n1:
                for m in range(n2):
                    Fi += noise[s, i * n2 + m] * x[n1 + m]
            else:
                for m in range(n1):
                    Fi -= noise[s, m * n2 + (i - n1)] * x[m]
            for m in range(n):
                Fi += A[i, m] * x[m]
            y[i] = x[i] - gamma_k * (Fi + lam[j] * g[i])
        project_base(kind, y, lo, hi, center, radius, x)
        sq = 0.0
        for m in range(J):
            sq += lam[m] * lam[m]
        if sq > lam_sq_max:
            lam_sq_max = sq
    return sum_t, lam_sq_max


@njit(cache=True)
def _gap_grad(A, b, xbar, y, out):
    n = y.shape[0]
    for i in range(n):
        s = -b[i]
        for m in range(n):
            s += A[m, i] * (xbar[m] - y[m]) - A[i, m] * y[m]
        out[i] = s


@njit(cache=True)
def gap_value(A, b, xbar, y):
    n = y.shape[0]
    s = 0.0
    for i in range(n):
        Fi = b[i]
        for m in range(n):
            Fi += A[i, m] * y[m]
        s += Fi * (xbar[i] - y[i])
    return s


@njit(cache=True)
def gap_ascent(A, b, xbar, y0, kind, lo, hi, center, radius, P, Q, R,
               step, tol, budget, proj_tol, proj_cycles, out):
    """Accelerated projected ascent on ``y -> (A y + b)^T (xbar - y)``.

    Momentum is reset whenever the step stops being an ascent direction.
    Returns ``(iterations, last_step_norm)``.
    """
    n = y0.shape[0]
    y = np.empty(n)
    dykstra(y0, kind, lo, hi, center, radius, P, Q, R, proj_tol, proj_cycles, y)
    z = y.copy()
    g = np.empty(n)
    trial = np.empty(n)
    y_new = np.empty(n)
    theta = 1.0
    last = np.inf
    it = 0
    while it < budget:
        it += 1
        _gap_grad(A, b, xbar, z, g)
        for i in range(n):
            trial[i] = z[i] + step * g[i]
        dykstra(trial, kind, lo, hi, center, radius, P, Q, R,
                proj_tol, proj_cycles, y_new)
        m2 = 0.0
        ascent = 0.0
        for i in range(n):
            d = y_new[i] - y[i]
            m2 += d * d
            ascent += g[i] * d
        last = math.sqrt(m2)
        theta_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
        if ascent < 0.0:
            theta_new = 1.0
            for i in range(n):
                z[i] = y_new[i]
        else:
            beta = (theta - 1.0) / theta_new
            for i in range(n):
                z[i] = y_new[i] + beta * (y_new[i] - y[i])
        theta = theta_new
        for i in range(n):
            y[i] = y_new[i]
        if last <= tol:
            break
    for i in range(n):
        out[i] = y[i]
    return it, last
