"""Compiled closed-loop kernels used by the integrator.

These mirror :meth:`CouplingSet.gradient` / :meth:`CouplingSet.energy` edge by
edge; the numpy versions stay the reference and the test suite holds the two
to 1e-12 agreement.
"""
import numpy as np
from numba import njit

OK = 0
DOMAIN = 1
SINGULAR = 2
ENERGY = 3

SINGULAR_LENGTH = 1e-12


@njit(cache=True)
def _edge_slope(j, L, barrier, rest, k, k1, k2, rc, pole):
    """Return (status, phi) with dh/dL = phi * (L - r)."""
    if barrier[j]:
        if L >= pole[j]:
            return DOMAIN, 0.0
        if L <= rest[j]:
            return OK, 2.0 * k1[j]
        gap = rc[j] - L
        return OK, k2[j] * (2.0 + (L - rest[j]) / gap) / gap
    return OK, k[j]


@njit(cache=True)
def accel(q, p, tails, heads, n, barrier, rest, k, k1, k2, rc, pole, damping, out):
    """out <- -Bbar^T (dH/dz + D Bbar p). Returns a status code."""
    for a in range(out.shape[0]):
        out[a] = 0.0
    z = np.empty(n)
    w = np.empty(n)
    for j in range(tails.shape[0]):
        t = tails[j] * n
        h = heads[j] * n
        L2 = 0.0
        for c in range(n):
            z[c] = q[h + c] - q[t + c]
            w[c] = p[h + c] - p[t + c]
            L2 += z[c] * z[c]
        L = np.sqrt(L2)
        status, phi = _edge_slope(j, L, barrier, rest, k, k1, k2, rc, pole)
        if status != OK:
            return status
        if rest[j] > 0.0:
            if L < SINGULAR_LENGTH:
                return SINGULAR
            ratio = (L - rest[j]) / L
        else:
            ratio = 1.0
        s = phi * ratio
        for c in range(n):
            f = s * z[c]
            for d in range(n):
                f += damping[j, c, d] * w[d]
            out[t + c] += f
            out[h + c] -= f
    return OK


@njit(cache=True)
def energy(q, p, tails, heads, n, barrier, rest, k, k1, k2, rc, pole):
    """Return (status, H)."""
    H = 0.0
    for a in range(p.shape[0]):
        H += 0.5 * p[a] * p[a]
    for j in range(tails.shape[0]):
        t = tails[j] * n
        h = heads[j] * n
        L2 = 0.0
        for c in range(n):
            d = q[h + c] - q[t + c]
            L2 += d * d
        L = np.sqrt(L2)
        e = L - rest[j]
        if barrier[j]:
            if L >= pole[j]:
                return DOMAIN, H
            if L <= rest[j]:
                H += k1[j] * e * e
            else:
                H += k2[j] * e * e / (rc[j] - L)
        else:
            H += 0.5 * k[j] * e * e
    return OK, H


@njit(cache=True)
def rk4_step(q, p, hstep, tails, heads, n, barrier, rest, k, k1, k2, rc, pole, damping,
             q_out, p_out):
    size = q.shape[0]
    a1 = np.empty(size)
    a2 = np.empty(size)
    a3 = np.empty(size)
    a4 = np.empty(size)
    p2 = np.empty(size)
    p3 = np.empty(size)
    p4 = np.empty(size)
    qs = np.empty(size)
    status = accel(q, p, tails, heads, n, barrier, rest, k, k1, k2, rc, pole, damping, a1)
    if status != OK:
        return status
    for a in range(size):
        p2[a] = p[a] + 0.5 * hstep * a1[a]
        qs[a] = q[a] + 0.5 * hstep * p[a]
    status = accel(qs, p2, tails, heads, n, barrier, rest, k, k1, k2, rc, pole, damping, a2)
    if status != OK:
        return status
    for a in range(size):
        p3[a] = p[a] + 0.5 * hstep * a2[a]
        qs[a] = q[a] + 0.5 * hstep * p2[a]
    status = accel(qs, p3, tails, heads, n, barrier, rest, k, k1, k2, rc, pole, damping, a3)
    if status != OK:
        return status
    for a in range(size):
        p4[a] = p[a] + hstep * a3[a]
        qs[a] = q[a] + hstep * p3[a]
    status = accel(qs, p4, tails, heads, n, barrier, rest, k, k1, k2, rc, pole, damping, a4)
    if status != OK:
        return status
    for a in range(size):
        q_out[a] = q[a] + (hstep / 6.0) * (p[a] + 2.0 * p2[a] + 2.0 * p3[a] + p4[a])
        p_out[a] = p[a] + (hstep / 6.0) * (a1[a] + 2.0 * a2[a] + 2.0 * a3[a] + a4[a])
    return OK


@njit(cache=True)
def run_steps(q, p, H, hstep, nsteps, guard, eps, tails, heads, n, barrier, rest, k, k1, k2,
              rc, pole, damping):
    """Advance up to ``nsteps`` full steps in place.

    Returns (status, steps_done, H, max_increase). On a nonzero status, q and
    p hold the state before the failing step.
    """
    q_new = np.empty_like(q)
    p_new = np.empty_like(p)
    max_inc = -np.inf
    for s in range(nsteps):
        status = rk4_step(q, p, hstep, tails, heads, n, barrier, rest, k, k1, k2, rc, pole,
                          damping, q_new, p_new)
        if status != OK:
            return status, s, H, max_inc
        status, H_new = energy(q_new, p_new, tails, heads, n, barrier, rest, k, k1, k2, rc, pole)
        if status != OK:
            return status, s, H, max_inc
        if guard and H_new > H + eps:
            return ENERGY, s, H, max_inc
        if H_new - H > max_inc:
            max_inc = H_new - H
        H = H_new
        q[:] = q_new
        p[:] = p_new
    return OK, nsteps, H, max_inc
