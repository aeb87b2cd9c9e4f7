"""Trivial, disease-free, and endemic steady states.

The disease-free profile solves the semilinear logistic equation by damped
Newton iteration with the exact tridiagonal Jacobian.  The endemic state has
a closed form for homogeneous rates under Neumann conditions; for general
setups a best-effort damped fixed-point probe is provided (the scheme only
commits to the homogeneous Neumann case and to nonexistence when the
reproduction number is at most one).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .agerates import age_integral, survival
from .dynamics import Scenario, State, Stepper
from .errors import ConfigurationError, SolverError
from .evolution import TransportOperators
from .spatial import NEUMANN, apply_laplacian, laplacian_diagonals

TRIVIAL = "trivial"
DISEASE_FREE = "disease_free"
ENDEMIC = "endemic"


@dataclass
class SteadyState:
    """A candidate time-independent solution with solve metadata."""

    kind: str
    S_star: np.ndarray
    I_star: Optional[np.ndarray] = None  # None means identically zero
    exists: bool = True
    residual_S: float = 0.0
    residual_I: float = 0.0


def trivial_state(grid, ages=None):
    """The extinct state S = I = 0."""
    I = np.zeros((ages.Na + 1, grid.n)) if ages is not None else None
    return SteadyState(TRIVIAL, np.zeros(grid.n), I)


def _newton_semilinear(grid, rates, q, S_init, tol=1e-10, max_iter=100):
    """Damped Newton for -Lap(S) + q S + (k1/k2) S^2 - k1 S = 0.

    Returns (S, residual_inf); raises SolverError on stagnation.
    """
    k1, k2 = rates.kappa1, rates.kappa2
    lower, main, upper = laplacian_diagonals(grid)
    ab = np.zeros((3, grid.n))
    q = np.zeros(grid.n) if q is None else np.asarray(q, dtype=float)

    def F(S):
        return -apply_laplacian(grid, S) + (q + (k1 / k2) * S - k1) * S

    S = np.asarray(S_init, dtype=float).copy()
    res = F(S)
    nrm = float(np.max(np.abs(res)))
    for _ in range(max_iter):
        if nrm <= tol:
            return S, nrm
        ab[0, 1:] = -upper
        ab[1, :] = -main + q + 2.0 * (k1 / k2) * S - k1
        ab[2, :-1] = -lower
        delta = solve_banded((1, 1), ab, -res)
        lam = 1.0
        for _ in range(40):
            trial = S + lam * delta
            tres = F(trial)
            tnrm = float(np.max(np.abs(tres)))
            if np.isfinite(tnrm) and tnrm < nrm:
                break
            lam *= 0.5
        else:
            raise SolverError(
                f"Newton stagnated at residual {nrm:.3e} (tolerance {tol:.1e})")
        S, res, nrm = trial, tres, tnrm
    raise SolverError(
        f"Newton did not converge in {max_iter} iterations "
        f"(last residual {nrm:.3e})")


def disease_free(grid, rates, ages=None, S_init=None):
    """Disease-free steady state (S*, 0) via damped Newton from S = kappa2.

    When the growth rate does not exceed the principal Laplacian eigenvalue
    the iteration collapses to zero and the result carries ``exists=False``.
    """
    start = np.full(grid.n, rates.kappa2) if S_init is None else S_init
    S, res = _newton_semilinear(grid, rates, None, start)
    exists = bool(S.max() > 1e-6 * rates.kappa2 and S.min() > 0)
    I = np.zeros((ages.Na + 1, grid.n)) if ages is not None else None
    if not exists:
        S = np.zeros(grid.n)
        res = 0.0
    return SteadyState(DISEASE_FREE, S, I, exists=exists, residual_S=res)


def closed_form_r0(ages, rates):
    """kappa2 * int b(a) Pi(a) da for age-only rates (trapezoid quadrature)."""
    if not rates.homogeneous:
        raise ConfigurationError("closed-form R0 needs age-only rates")
    Pi = survival(ages, rates.m[:, 0])
    return float(rates.kappa2 * (ages.weights @ (rates.b[:, 0] * Pi)))


def endemic_closed_form(grid, ages, rates):
    """Endemic steady state for homogeneous rates under Neumann conditions.

    Requires r = 0 and reproduction number above one (otherwise no endemic
    state exists and a ConfigurationError is raised).  The one-step drift of
    the scheme at the returned state is stored in the residual fields.
    """
    if grid.delta != NEUMANN:
        raise ConfigurationError("closed form needs Neumann conditions (delta=1)")
    if not rates.homogeneous:
        raise ConfigurationError("closed form needs age-only rates")
    if np.any(rates.r > 0):
        raise ConfigurationError("closed form assumes zero recovery rate")
    R0 = closed_form_r0(ages, rates)
    if R0 <= 1.0:
        raise ConfigurationError(
            f"no endemic state: reproduction number {R0:.6g} <= 1")
    r0 = 1.0 / R0
    Pi = survival(ages, rates.m[:, 0])
    i_star = r0 * rates.kappa1 * rates.kappa2 * (1.0 - r0)
    S = np.full(grid.n, r0 * rates.kappa2)
    I = i_star * np.repeat(Pi[:, None], grid.n, axis=1)
    state = SteadyState(ENDEMIC, S, I)
    scenario = Scenario(grid, ages, rates, S, I, T_end=ages.da)
    state.residual_S, state.residual_I = steady_residual(state, scenario)
    return state


def steady_residual(state, scenario):
    """Inf-norm one-step drift (dS, dI) of the scheme at a steady state."""
    I = state.I_star
    if I is None:
        I = np.zeros((scenario.ages.Na + 1, scenario.grid.n))
    start = State(0.0, np.asarray(state.S_star, dtype=float).copy(), I.copy())
    nxt = Stepper(scenario).step(start)
    return (float(np.max(np.abs(nxt.S - state.S_star))),
            float(np.max(np.abs(nxt.I - I))))


def endemic_probe(grid, ages, rates, max_iter=500, damping=0.5, tol=1e-10):
    """Best-effort damped fixed-point search for an endemic state.

    Alternates the Newton solve for S given the infection load with the
    renewal update I0 <- S * Q0 I0 under damping.  Returns None when the
    iteration decays to zero (guaranteed for reproduction numbers <= 1) or
    the budget runs out.
    """
    transport = TransportOperators(grid, ages, rates)
    P = transport.cumulative()
    k1, k2 = rates.kappa1, rates.kappa2

    def q_of(I0):
        slices = np.einsum("kij,j->ki", P, I0)
        return age_integral(ages, rates.b * slices)

    I0 = np.full(grid.n, 0.1 * k1 * k2)
    S = np.full(grid.n, k2)
    floor = 1e-9 * k1 * k2
    for _ in range(max_iter):
        if I0.max() < floor:
            return None
        q = q_of(I0)
        try:
            S, _ = _newton_semilinear(grid, rates, q, S)
        except SolverError:
            return None
        if S.max() <= 0:
            return None
        I0_next = (1.0 - damping) * I0 + damping * (S * q)
        delta = float(np.max(np.abs(I0_next - I0)))
        I0 = I0_next
        if delta <= tol * max(1.0, float(I0.max())):
            break
    else:
        return None
    if I0.max() < 1e-8:
        return None
    I = np.einsum("kij,j->ki", P, I0)
    state = SteadyState(ENDEMIC, S, I)
    scenario = Scenario(grid, ages, rates, S, I, T_end=ages.da)
    state.residual_S, state.residual_I = steady_residual(state, scenario)
    return state
