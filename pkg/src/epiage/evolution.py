"""Discrete heat semigroup and the age-parameterized transport operators.

The propagator over a diffusion "time" theta is built from Crank-Nicolson
substeps whose length respects the positivity bound dt <= h^2/2, composed by
binary matrix powering and clipped at zero.  The resulting dense matrices are
entrywise nonnegative with unit (Neumann) or sub-unit (Dirichlet) row sums,
so every later application preserves positivity and the sup-norm contraction
exactly.  Matrices are cached per (grid, theta) key; the cache is guarded by
a lock and read-mostly after warmup, and repeated calls with the same inputs
are bit-identical regardless of thread interleaving.

An age interval [a_k, a_{k+1}] is traversed by Strang splitting: half-step
multiplicative decay exp(-(m+r) da/2) applied node-wise, diffusion with the
accumulated coefficient integral of d, then the second decay half-step.  For
age-only rates this reproduces the product formula
exp(-int m+r) * heat(int d) exactly up to the heat-step error.
"""

import math

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigurationError, SolverError
from .spatial import NEUMANN, heat_cache, laplacian_diagonals


def _cn_substep_matrix(grid, tau):
    """Dense Crank-Nicolson factor (I - tau/2 L)^-1 (I + tau/2 L)."""
    lower, main, upper = laplacian_diagonals(grid)
    n = grid.n
    rhsm = np.zeros((n, n))
    idx = np.arange(n)
    rhsm[idx, idx] = 1.0 + 0.5 * tau * main
    rhsm[idx[1:], idx[:-1]] = 0.5 * tau * lower
    rhsm[idx[:-1], idx[1:]] = 0.5 * tau * upper
    ab = np.zeros((3, n))
    ab[0, 1:] = -0.5 * tau * upper
    ab[1, :] = 1.0 - 0.5 * tau * main
    ab[2, :-1] = -0.5 * tau * lower
    return solve_banded((1, 1), ab, rhsm)


def heat_propagator(grid, t, demand_positivity=True):
    """Dense approximation of exp(t * Delta_B), cached per (grid, t).

    With ``demand_positivity`` the substep length is capped at h^2/2 so each
    Crank-Nicolson factor is entrywise nonnegative; otherwise the cap is h
    (accuracy only).
    """
    if t < 0:
        raise ConfigurationError(f"need t >= 0, got {t}")
    if t == 0:
        return np.eye(grid.n)
    cache, lock = heat_cache()
    key = (grid.key, float(t), bool(demand_positivity))
    M = cache.get(key)
    if M is not None:
        return M
    cap = 0.5 * grid.h ** 2 if demand_positivity else grid.h
    nsub = max(1, math.ceil(t / cap))
    M = np.linalg.matrix_power(_cn_substep_matrix(grid, t / nsub), nsub)
    if demand_positivity:
        low = float(M.min())
        if low < -1e-10:
            raise SolverError(
                f"propagator entries below tolerance ({low:.3e}); "
                "positivity bound violated")
        np.clip(M, 0.0, None, out=M)
    with lock:
        cache.setdefault(key, M)
    return cache[key]


def heat_step(grid, t, u, demand_positivity=True):
    """Apply the Crank-Nicolson heat propagator over time t to a field."""
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n,):
        raise ConfigurationError(
            f"field length {u.shape} does not match grid n={grid.n}")
    if t == 0:
        return u.copy()
    return heat_propagator(grid, t, demand_positivity) @ u


def _interval_parts(grid, ages, rates, k):
    """(decay half-step g, diffusion time theta) for age interval k."""
    da = ages.da
    mr = rates.m[k] + rates.r[k] + rates.m[k + 1] + rates.r[k + 1]
    g = np.exp(-0.25 * da * mr)
    theta = 0.5 * da * (rates.d[k] + rates.d[k + 1])
    return g, theta


class TransportOperators:
    """Dense slice propagators U_A(a_{k+1}, a_k) for one (grid, ages, rates).

    ``E[k]`` maps the age-a_k slice to age a_{k+1}; ``cumulative()`` gives the
    stack P[k] = U_A(a_k, 0).  Instances are immutable after construction and
    safe to share across threads.
    """

    def __init__(self, grid, ages, rates):
        self.grid = grid
        self.ages = ages
        self.rates = rates
        n, Na = grid.n, ages.Na
        E = np.empty((Na, n, n))
        for k in range(Na):
            g, theta = _interval_parts(grid, ages, rates, k)
            H = heat_propagator(grid, theta)
            E[k] = g[:, None] * H * g[None, :]
        self.E = E
        self._P = None

    def cumulative(self):
        """Stack P of shape (Na+1, n, n) with P[k] = U_A(a_k, 0)."""
        if self._P is None:
            n, Na = self.grid.n, self.ages.Na
            P = np.empty((Na + 1, n, n))
            P[0] = np.eye(n)
            for k in range(Na):
                P[k + 1] = self.E[k] @ P[k]
            self._P = P
        return self._P

    def propagate(self, u, k_from, k_to):
        """Transport a field from age node k_from to age node k_to."""
        v = np.asarray(u, dtype=float).copy()
        for k in range(k_from, k_to):
            v = self.E[k] @ v
        return v


def _segment_integral(ages, table, lo, hi, k):
    """Integral of the piecewise-linear table over [lo, hi] within interval k."""
    da = ages.da
    t0, t1 = table[k], table[k + 1]

    def value(s):
        return t0 + (t1 - t0) * ((s - ages.nodes[k]) / da)

    return (hi - lo) * 0.5 * (value(lo) + value(hi))


def _partial_apply(grid, ages, rates, lo, hi, k, v):
    """Apply the propagator for the sub-interval [lo, hi] of age interval k."""
    mr = rates.m + rates.r
    dec = _segment_integral(ages, mr, lo, hi, k)
    theta = float(_segment_integral(ages, rates.d, lo, hi, k))
    g = np.exp(-0.5 * dec)
    return g * (heat_propagator(grid, theta) @ (g * v))


def evolution_step(grid, ages, rates, a_from, a_to, u):
    """Approximate U_A(a_to, a_from) u.

    The interval is decomposed over the age mesh; node-aligned sub-intervals
    reuse the cached slice propagators, so chaining node-aligned steps
    composes exactly.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n,):
        raise ConfigurationError(
            f"field length {u.shape} does not match grid n={grid.n}")
    tol = 1e-12 * max(ages.a_m, 1.0)
    if not (-tol <= a_from <= a_to <= ages.a_m + tol):
        raise ConfigurationError(
            f"need 0 <= a_from <= a_to <= a_m, got ({a_from}, {a_to})")
    if a_to - a_from <= tol:
        return u.copy()

    da = ages.da
    k_lo = min(int(math.ceil(a_from / da - 1e-9)), ages.Na)
    k_hi = max(int(math.floor(a_to / da + 1e-9)), 0)
    v = u.copy()
    if k_lo > k_hi:
        # both endpoints inside one mesh interval
        return _partial_apply(grid, ages, rates, a_from, a_to, k_hi, v)
    if ages.nodes[k_lo] - a_from > tol:
        v = _partial_apply(grid, ages, rates, a_from, ages.nodes[k_lo],
                           k_lo - 1, v)
    for k in range(k_lo, k_hi):
        g, theta = _interval_parts(grid, ages, rates, k)
        v = g * (heat_propagator(grid, theta) @ (g * v))
    if a_to - ages.nodes[k_hi] > tol:
        v = _partial_apply(grid, ages, rates, ages.nodes[k_hi], a_to,
                           min(k_hi, ages.Na - 1), v)
    return v
