"""Time stepping of the full nonlinear system.

The time step is hard-locked to the age step (dt = da) so age transport runs
exactly along characteristics: every step shifts each age slice up by one
node through the dense slice propagators, updates the susceptibles by a
positivity-preserving Patankar/IMEX rule with implicit diffusion, and then
fills the age-0 slice from the implicit renewal boundary condition.  Age
slice Na is discarded each step (removal at the maximal age).

Nonnegative input data stays nonnegative: the propagators are entrywise
nonnegative, the Patankar weighting keeps the reaction update positive, and
the implicit renewal solve divides by a positive denominator.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .agerates import age_integral
from .errors import ConfigurationError, SolverError, StepSizeError
from .evolution import TransportOperators
from .spatial import laplacian_diagonals


@dataclass
class State:
    """Snapshot (t, S, I) with I[k] the slice at age node a_k."""

    t: float
    S: np.ndarray
    I: np.ndarray

    def copy(self):
        return State(self.t, self.S.copy(), self.I.copy())


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable simulation setup; dt is locked to ages.da."""

    grid: object
    ages: object
    rates: object
    S0: np.ndarray
    I0: np.ndarray
    T_end: float
    output_stride: int = 1

    def __post_init__(self):
        n, Na = self.grid.n, self.ages.Na
        if np.asarray(self.S0).shape != (n,):
            raise ConfigurationError("S0 length does not match the grid")
        if np.asarray(self.I0).shape != (Na + 1, n):
            raise ConfigurationError("I0 must have one slice per age node")
        if np.any(self.S0 < 0) or np.any(self.I0 < 0):
            raise ConfigurationError("initial data must be nonnegative")
        if not self.T_end >= 0:
            raise ConfigurationError(f"need T_end >= 0, got {self.T_end}")
        if self.output_stride < 1:
            raise ConfigurationError("output_stride must be >= 1")

    @property
    def dt(self):
        return self.ages.da


@dataclass
class Trajectory:
    """Snapshots plus stride-1 summary series (one entry per time step)."""

    snapshots: list = field(default_factory=list)
    series: dict = field(default_factory=dict)


def infection_pressure(ages, rates, I):
    """Node-wise integral over age of b * I (the renewal pressure)."""
    return age_integral(ages, rates.b * I)


def reaction(S, pressure, recovery, rates):
    """Logistic growth minus infection loss plus recovery gain."""
    k1, k2 = rates.kappa1, rates.kappa2
    return k1 * (1.0 - S / k2) * S - S * pressure + recovery


def renewal_boundary(S_new, I_interior, ages, rates):
    """Solve the implicit age-0 boundary condition node-wise.

    ``I_interior`` holds the already-transported slices (rows 1..Na are
    read).  Raises StepSizeError when 1 - S*w0*b(0,.) is not positive.
    """
    bw = ages.weights[:, None] * rates.b
    partial = np.einsum("kj,kj->j", bw[1:], np.asarray(I_interior)[1:])
    denom = 1.0 - S_new * bw[0]
    if denom.min() <= 0.0:
        raise StepSizeError(
            "renewal denominator 1 - S*w0*b(0,.) not positive; "
            "refine the age mesh (larger Na)")
    return S_new * partial / denom


class Stepper:
    """Precomputed operators for repeated steps of one scenario."""

    def __init__(self, scenario):
        self.scenario = scenario
        grid, ages, rates = scenario.grid, scenario.ages, scenario.rates
        self.transport = TransportOperators(grid, ages, rates)
        self.E = np.ascontiguousarray(self.transport.E)
        self.bw = np.ascontiguousarray(ages.weights[:, None] * rates.b)
        self.rw = np.ascontiguousarray(ages.weights[:, None] * rates.r)
        dt = scenario.dt
        lower, main, upper = laplacian_diagonals(grid)
        self.dl = np.ascontiguousarray(-lower)
        self.dd = np.ascontiguousarray(1.0 / dt - main)
        self.du = np.ascontiguousarray(-upper)
        self._scratch = np.empty_like(scenario.I0, dtype=float)

    def step(self, state, diag=None):
        """Advance one locked step dt = da; optionally fill a diagnostics dict."""
        sc = self.scenario
        rates = sc.rates
        S_star, S_new, I_new, min_denom = kernels.step_core(
            state.S, state.I, self.E, self.bw, self.rw,
            rates.kappa1, rates.kappa2, sc.dt,
            self.dl, self.dd, self.du, self._scratch)
        if min_denom <= 0.0:
            raise StepSizeError(
                "renewal denominator 1 - S*w0*b(0,.) not positive at "
                f"t={state.t + sc.dt:.6g}; refine the age mesh (larger Na)")
        if diag is not None:
            grid, ages = sc.grid, sc.ages
            half_da = 0.5 * ages.da
            diag["aged_out"] = half_da * float(
                grid.weights @ (state.I[-2] + state.I[-1]))
            diag["flux_S"] = grid.integrate(S_new) - grid.integrate(S_star)
        return State(state.t + sc.dt, S_new, I_new.copy())


def step(state, scenario):
    """One step of the scheme (builds operators; use Stepper for loops)."""
    return Stepper(scenario).step(state)


def _summaries(scenario, state):
    grid, ages, rates = scenario.grid, scenario.ages, scenario.rates
    k1, k2 = rates.kappa1, rates.kappa2
    spatial_mass = state.I @ grid.weights
    mass_I = float(ages.weights @ spatial_mass)
    mass_S = grid.integrate(state.S)
    return {
        "mass_S": mass_S,
        "mass_I": mass_I,
        "sup_S": float(state.S.max()),
        "renewal_norm": float(grid.weights @ state.I[0]),
        "gain": float(grid.weights @ (k1 * (1.0 - state.S / k2) * state.S)),
        "sink": float(ages.weights @ ((rates.m * state.I) @ grid.weights)),
    }


def simulate(scenario):
    """Run the scheme until t >= T_end, recording stride-1 summaries.

    Snapshots are stored every ``output_stride`` steps plus the final state.
    Aborts with SolverError if any summary turns non-finite.
    """
    n_steps = int(np.ceil(scenario.T_end / scenario.dt - 1e-9)) \
        if scenario.T_end > 0 else 0
    stepper = Stepper(scenario)
    state = State(0.0, np.asarray(scenario.S0, dtype=float).copy(),
                  np.asarray(scenario.I0, dtype=float).copy())

    keys = ("t", "mass_S", "mass_I", "sup_S", "renewal_norm", "gain", "sink",
            "aged_out", "flux_S")
    series = {k: np.zeros(n_steps + 1) for k in keys}

    def record(i, state, extra):
        series["t"][i] = state.t
        summ = _summaries(scenario, state)
        for k, v in summ.items():
            series[k][i] = v
        for k, v in extra.items():
            series[k][i] = v
        if not np.isfinite(summ["mass_S"] + summ["mass_I"] + summ["sup_S"]):
            raise SolverError(
                f"non-finite state at t={state.t:.6g} "
                f"(mass_S={summ['mass_S']}, mass_I={summ['mass_I']})")

    traj = Trajectory(series=series)
    record(0, state, {})
    traj.snapshots.append(state.copy())
    for i in range(1, n_steps + 1):
        diag = {}
        state = stepper.step(state, diag)
        record(i, state, diag)
        if i % scenario.output_stride == 0 or i == n_steps:
            traj.snapshots.append(state.copy())
    return traj
