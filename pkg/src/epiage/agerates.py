"""Age mesh on [0, a_m], trapezoidal quadrature, and the model coefficients.

Rates are supplied as constants or callables and sampled once onto the
(age x space) lattice; the sampled tables are the ground truth thereafter.
Because the quadrature is trapezoidal, discontinuous infection rates must
align their jumps with age nodes.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True, eq=False)
class AgeGrid:
    """Uniform age mesh with trapezoidal quadrature weights."""

    a_m: float
    Na: int
    da: float
    nodes: np.ndarray    # a_k = k*da, shape (Na+1,)
    weights: np.ndarray  # trapezoid weights, shape (Na+1,), sum = a_m

    @property
    def key(self):
        return (self.a_m, self.Na)


def build_age_grid(a_m, Na):
    """Uniform age mesh with Na intervals on [0, a_m]."""
    if not a_m > 0:
        raise ConfigurationError(f"need a_m > 0, got {a_m}")
    Na = int(Na)
    if Na < 2:
        raise ConfigurationError(f"need Na >= 2, got {Na}")
    da = a_m / Na
    nodes = da * np.arange(Na + 1)
    weights = np.full(Na + 1, da)
    weights[0] = weights[-1] = da / 2.0
    return AgeGrid(float(a_m), Na, da, nodes, weights)


@dataclass(frozen=True, eq=False)
class RateSet:
    """Model coefficients sampled on the age (x space) lattice.

    d is diffusion versus age only; m (mortality), r (recovery) and
    b (infection) are (Na+1, n) tables.  ``homogeneous`` is True when all of
    them are constant across space.
    """

    kappa1: float
    kappa2: float
    d: np.ndarray
    m: np.ndarray
    r: np.ndarray
    b: np.ndarray
    homogeneous: bool


def _sample_table(fn, ages, grid, name):
    """Sample scalar / f(a) / f(a, x) onto the (Na+1, n) lattice."""
    shape = (ages.Na + 1, grid.n)
    if np.isscalar(fn):
        return np.full(shape, float(fn))
    a = ages.nodes[:, None]
    x = grid.x[None, :]
    try:
        tab = np.broadcast_to(np.asarray(fn(a, x), dtype=float), shape).copy()
    except TypeError:
        tab = np.broadcast_to(
            np.asarray(fn(ages.nodes), dtype=float)[:, None], shape).copy()
    if tab.shape != shape:
        raise ConfigurationError(f"rate {name} sampled to shape {tab.shape}")
    if not np.all(np.isfinite(tab)):
        raise ConfigurationError(f"rate {name} has non-finite samples")
    return tab


def sample_rates(ages, grid, *, kappa1, kappa2, b, d=1.0, m=0.0, r=0.0):
    """Validate and sample the coefficient set onto the lattice.

    b, d, m, r may each be a nonnegative constant, a callable of age, or a
    callable of (age, x); d must depend on age only and stay positive.
    """
    if not kappa1 > 0 or not kappa2 > 0:
        raise ConfigurationError(
            f"need kappa1, kappa2 > 0, got ({kappa1}, {kappa2})")
    if np.isscalar(d):
        d_tab = np.full(ages.Na + 1, float(d))
    else:
        d_tab = np.asarray(d(ages.nodes), dtype=float)
        d_tab = np.broadcast_to(d_tab, (ages.Na + 1,)).copy()
    if not np.all(d_tab > 0):
        raise ConfigurationError("diffusion d must be positive on all age nodes")

    m_tab = _sample_table(m, ages, grid, "m")
    r_tab = _sample_table(r, ages, grid, "r")
    b_tab = _sample_table(b, ages, grid, "b")
    for name, tab in (("m", m_tab), ("r", r_tab), ("b", b_tab)):
        if np.any(tab < 0):
            raise ConfigurationError(f"rate {name} must be nonnegative")
    if not np.any(b_tab > 0):
        raise ConfigurationError("infection rate b must not vanish identically")

    homogeneous = all(
        np.all(tab == tab[:, :1]) for tab in (m_tab, r_tab, b_tab))
    return RateSet(float(kappa1), float(kappa2), d_tab, m_tab, r_tab, b_tab,
                   homogeneous)


def cumulative_trapezoid(ages, values):
    """Trapezoidal cumulative integral along age, starting at 0.

    ``values`` has shape (Na+1,) or (Na+1, n); the result has the same shape.
    """
    values = np.asarray(values, dtype=float)
    inc = 0.5 * ages.da * (values[1:] + values[:-1])
    out = np.zeros_like(values)
    np.cumsum(inc, axis=0, out=out[1:])
    return out


def survival(ages, m):
    """Survival profile Pi(a_k) = exp(-int_0^{a_k} m) for an age-only m."""
    m = np.asarray(m, dtype=float)
    if m.shape != (ages.Na + 1,):
        raise ConfigurationError(
            f"survival needs an age-only mortality of length {ages.Na + 1}")
    if np.any(m < 0):
        raise ConfigurationError("mortality samples must be nonnegative")
    return np.exp(-cumulative_trapezoid(ages, m))


def age_integral(ages, values):
    """Trapezoidal integral over age: sum_k w_k values[k], node-wise in x."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != ages.Na + 1:
        raise ConfigurationError(
            f"expected {ages.Na + 1} age slices, got {values.shape[0]}")
    return ages.weights @ values
