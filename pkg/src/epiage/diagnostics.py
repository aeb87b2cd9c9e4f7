"""Conservation, positivity, and envelope checks for simulation output.

The mass ledger accumulates discrete counterparts of the terms in the total
population balance: logistic gain (time trapezoid of the instantaneous gain),
mortality sink (time trapezoid of the instantaneous sink), and the mass that
ages past a_m each step.  Its residual

    residual(t) = total(t) - total(0) - gain(t) + sink(t) + aged_out(t)

is pure transcription error under Neumann conditions (the diffusion stages
conserve the discrete integral exactly), so it shrinks under refinement.
Under Dirichlet conditions the boundary leak stays inside the residual,
keeping it negative; ``boundary_flux`` additionally reports the measured
mass change of the implicit S-diffusion stage.
"""

from dataclasses import dataclass

import numpy as np

from .agerates import age_integral
from .errors import ConfigurationError


@dataclass
class MassLedger:
    """Per-step terms of the discrete population balance (all cumulative)."""

    t: np.ndarray
    total_mass: np.ndarray
    initial_mass: float
    logistic_gain: np.ndarray
    mortality_sink: np.ndarray
    aged_out: np.ndarray
    boundary_flux: np.ndarray
    residual: np.ndarray


def _time_trapezoid(t, values):
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * np.diff(t) * (values[1:] + values[:-1]))
    return out


def mass_ledger(trajectory, scenario):
    """Assemble the mass ledger from the stride-1 summary series."""
    s = trajectory.series
    required = ("t", "mass_S", "mass_I", "gain", "sink", "aged_out", "flux_S")
    if any(k not in s for k in required):
        raise ConfigurationError("trajectory lacks stride-1 summary series")
    t = s["t"]
    total = s["mass_S"] + s["mass_I"]
    gain = _time_trapezoid(t, s["gain"])
    sink = _time_trapezoid(t, s["sink"])
    aged = np.cumsum(s["aged_out"])
    flux = np.cumsum(s["flux_S"])
    residual = total - total[0] - gain + sink + aged
    return MassLedger(t, total, float(total[0]), gain, sink, aged, flux,
                      residual)


def logistic_envelope(S0_sup, kappa1, kappa2, t):
    """Closed-form logistic upper envelope z(t) with z(0) = sup S0."""
    if np.any(np.asarray(S0_sup) < 0):
        raise ConfigurationError("S0_sup must be nonnegative")
    t = np.asarray(t, dtype=float)
    if S0_sup == 0:
        return np.zeros_like(t) if t.ndim else 0.0
    z = S0_sup / (np.exp(-kappa1 * t) * (1.0 - S0_sup / kappa2)
                  + S0_sup / kappa2)
    return z if t.ndim else float(z)


@dataclass
class PositivityReport:
    passed: bool
    min_value: float
    clipped: int


def positivity_check(state, clip=True):
    """Check min over all nodes and slices; pass iff >= -1e-12.

    Values in [-1e-12, 0) count as roundoff and are clipped in place when
    ``clip`` is set.
    """
    lo = min(float(state.S.min()), float(state.I.min()))
    clipped = int(np.count_nonzero((state.S < 0) & (state.S >= -1e-12))
                  + np.count_nonzero((state.I < 0) & (state.I >= -1e-12)))
    passed = lo >= -1e-12
    if clip and passed and clipped:
        np.clip(state.S, 0.0, None, out=state.S)
        np.clip(state.I, 0.0, None, out=state.I)
    return PositivityReport(passed, lo, clipped)


def convergence_metric(trajectory, target, scenario):
    """Per-snapshot L1 distance to a steady state: ||S-S*|| + ||I-I*||."""
    grid, ages = scenario.grid, scenario.ages
    S_star = np.asarray(target.S_star, dtype=float)
    I_star = target.I_star
    if I_star is None:
        I_star = np.zeros((ages.Na + 1, grid.n))
    out = np.empty(len(trajectory.snapshots))
    for i, snap in enumerate(trajectory.snapshots):
        dS = grid.weights @ np.abs(snap.S - S_star)
        dI = age_integral(ages, np.abs(snap.I - I_star) @ grid.weights)
        out[i] = dS + dI
    return out
