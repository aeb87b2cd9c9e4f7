"""Linear stability machinery: renewal operators, thresholds, and roots.

The operator family applied here is the age quadrature
S* . sum_k w_k b(a_k) exp(-lambda a_k) U_A(a_k, 0), assembled either
matrix-free (one transport sweep reused for all quadrature nodes) or as a
dense matrix from the cumulative propagator stack.  The reproduction number
is its spectral radius at lambda = 0 (power iteration from the constant
vector, Krein-Rutman), the spectral bound solves r = 1 by bisection using
the strict monotonicity of the radius in lambda, and the endemic stability
verdict comes from the characteristic equation per spatial eigenvalue, with
roots located by argument-principle counting on rectangles plus Newton
polish.
"""

import cmath
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .agerates import cumulative_trapezoid, survival
from .errors import ConfigurationError, SolverError
from .evolution import TransportOperators
from .spatial import (NEUMANN, apply_laplacian, laplacian_diagonals,
                      laplacian_eigenpairs, laplacian_matrix)
from .steadystate import DISEASE_FREE, ENDEMIC, TRIVIAL, closed_form_r0

REAL_PART_TOL = 1e-6

STABLE = "linearly_stable"
UNSTABLE = "linearly_unstable"
INCONCLUSIVE = "inconclusive"


@dataclass
class SpectralReport:
    """Stability summary for one steady state."""

    kind: str
    R0: float
    s0: Optional[float] = None
    lambda0: Optional[float] = None
    char_roots: list = field(default_factory=list)  # (mu_j, root, |F| residual)
    verdict: str = INCONCLUSIVE


class QOperator:
    """Dense/matrix-free forms of S* Q^lambda for one steady profile."""

    def __init__(self, grid, ages, rates, S_star):
        self.grid, self.ages, self.rates = grid, ages, rates
        self.S_star = np.asarray(S_star, dtype=float)
        self.transport = TransportOperators(grid, ages, rates)
        P = self.transport.cumulative()
        # b-weighted cumulative stack: BP[k,i,j] = b(a_k, x_i) P[k,i,j]
        self._BP = rates.b[:, :, None] * P

    def coeffs(self, lam):
        return self.ages.weights * np.exp(-lam * self.ages.nodes)

    def matrix(self, lam):
        c = self.coeffs(lam)
        M = np.tensordot(c, self._BP, axes=(0, 0))
        return self.S_star[:, None] * M

    def apply(self, lam, u):
        c = self.coeffs(lam)
        v = np.asarray(u, dtype=float)
        acc = c[0] * self.rates.b[0] * v
        for k in range(self.ages.Na):
            v = self.transport.E[k] @ v
            acc = acc + c[k + 1] * self.rates.b[k + 1] * v
        return self.S_star * acc


def q_operator_apply(lam, S_star, u, grid, ages, rates):
    """Apply S* Q^lambda to a field (one transport sweep for all ages)."""
    return QOperator(grid, ages, rates, S_star).apply(lam, u)


def spectral_radius(apply_fn, n, tol=1e-10, max_iter=10000):
    """Power iteration from the constant vector for a positive operator.

    Returns (radius, nonnegative eigenvector normalized in sup norm).
    """
    v = np.ones(n)
    est_prev = None
    for _ in range(max_iter):
        w = np.asarray(apply_fn(v))
        est = float(np.max(np.abs(w)))
        if est == 0.0:
            return 0.0, v
        v = w / est
        if est_prev is not None and abs(est - est_prev) < tol:
            return est, np.abs(v)
        est_prev = est
    raise SolverError(
        f"power iteration did not converge in {max_iter} iterations")


def basic_reproduction_number(steady, grid, ages, rates):
    """R0 = spectral radius of S~* Q^0 at the disease-free state."""
    if steady.kind != DISEASE_FREE or not steady.exists:
        raise ConfigurationError(
            "reproduction number needs an existing disease-free state")
    if not np.any(rates.b > 0):
        warnings.warn("infection rate b vanishes identically; R0 = 0 "
                      "(degenerate input)", stacklevel=2)
        return 0.0
    qop = QOperator(grid, ages, rates, steady.S_star)
    M = qop.matrix(0.0)
    radius, _ = spectral_radius(lambda u: M @ u, grid.n)
    return radius


def spectral_bound(S_star, grid, ages, rates, tol=1e-8):
    """Unique real s0 with r(S* Q^{s0}) = 1, by bisection.

    Uses the strict monotone decay of the radius in lambda; the bracket is
    grown geometrically from [-1, 1].
    """
    qop = QOperator(grid, ages, rates, S_star)

    def g(lam):
        M = qop.matrix(lam)
        radius, _ = spectral_radius(lambda u: M @ u, grid.n)
        return radius - 1.0

    lo, hi = -1.0, 1.0
    for _ in range(60):
        if g(lo) > 0:
            break
        lo *= 2.0
    else:
        raise SolverError("bracket growth failed on the lower side")
    for _ in range(60):
        if g(hi) < 0:
            break
        hi *= 2.0
    else:
        raise SolverError("bracket growth failed on the upper side")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = g(mid)
        if abs(val) <= tol:
            return mid
        if val > 0:
            lo = mid
        else:
            hi = mid
    raise SolverError("spectral-bound bisection failed to reach tolerance")


def principal_eigenvalue(q, grid, tol=1e-12, max_iter=500):
    """Smallest eigenvalue of -Delta_B + diag(q), by shifted inverse iteration.

    Returns (lambda0, eigenfunction) with the eigenfunction positive and
    normalized in the discrete L2 norm.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (grid.n,):
        raise ConfigurationError("q must be a field on the grid")
    shift = float(q.min()) - 1.0
    lower, main, upper = laplacian_diagonals(grid)
    ab = np.zeros((3, grid.n))
    ab[0, 1:] = -upper
    ab[1, :] = -main + q - shift
    ab[2, :-1] = -lower

    def rayleigh(v):
        Av = -apply_laplacian(grid, v) + q * v
        return grid.inner(v, Av) / grid.inner(v, v)

    v = np.ones(grid.n)
    v /= np.sqrt(grid.inner(v, v))
    lam_prev = None
    for _ in range(max_iter):
        v = scipy.linalg.solve_banded((1, 1), ab, v)
        v /= np.sqrt(grid.inner(v, v))
        lam = rayleigh(v)
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            if v.sum() < 0:
                v = -v
            return lam, np.abs(v)
        lam_prev = lam
    raise SolverError(
        f"inverse iteration did not converge in {max_iter} iterations")


# ---------------------------------------------------------------------------
# characteristic equation for the endemic state (homogeneous Neumann)


class _CharParams:
    """Quadrature tables shared by the characteristic-equation functions."""

    def __init__(self, rates, ages):
        if not rates.homogeneous:
            raise ConfigurationError(
                "characteristic equation needs age-only rates")
        self.kappa1 = rates.kappa1
        self.kappa2 = rates.kappa2
        self.a = ages.nodes
        Pi = survival(ages, rates.m[:, 0])
        self.D = cumulative_trapezoid(ages, rates.d)
        self.base = ages.weights * rates.b[:, 0] * Pi
        self.R0 = rates.kappa2 * float(self.base.sum())
        if self.R0 <= 0:
            raise ConfigurationError("reproduction number vanishes")
        self.r0 = 1.0 / self.R0

    def kernel(self, mu):
        # r0 * kappa2 * w_k b_k Pi_k exp(-mu int d); contracts with exp(-lam a)
        return self.r0 * self.kappa2 * self.base * np.exp(-mu * self.D)

    def R(self, lam, mu):
        """R_{lam, mu}, vectorized over a complex array lam."""
        lam = np.asarray(lam)
        ker = self.kernel(mu)
        return np.exp(-np.multiply.outer(lam, self.a)) @ ker

    def dR(self, lam, mu):
        lam = np.asarray(lam)
        ker = self.kernel(mu) * (-self.a)
        return np.exp(-np.multiply.outer(lam, self.a)) @ ker

    def F(self, lam, mu):
        zeta = (lam + mu) / self.kappa1
        return 1.0 / self.R(lam, mu) - 1.0 + (1.0 - self.r0) / (zeta + self.r0)

    def G(self, lam, mu):
        """Entire function with the same zeros as F (denominators cleared)."""
        zeta = (np.asarray(lam) + mu) / self.kappa1
        return (zeta + self.r0) - self.R(lam, mu) * (zeta + 2.0 * self.r0 - 1.0)

    def dG(self, lam, mu):
        zeta = (np.asarray(lam) + mu) / self.kappa1
        return (1.0 - self.R(lam, mu)) / self.kappa1 \
            - self.dR(lam, mu) * (zeta + 2.0 * self.r0 - 1.0)


def char_value(lam, mu, rates, ages):
    """R_{lam, mu}: damped age quadrature of the endemic linearization."""
    params = _CharParams(rates, ages)
    return complex(params.R(complex(lam), float(mu)))


def _contour_points(re0, re1, im0, im1, per_edge):
    cs = [complex(re0, im0), complex(re1, im0),
          complex(re1, im1), complex(re0, im1)]
    pts = []
    for a, b in zip(cs, cs[1:] + cs[:1]):
        t = np.linspace(0.0, 1.0, per_edge, endpoint=False)
        pts.append(a + (b - a) * t)
    return np.concatenate(pts)


def _winding(fvals):
    ratios = fvals[np.r_[1:len(fvals), 0]] / fvals
    jumps = np.angle(ratios)
    return float(jumps.sum() / (2.0 * np.pi)), float(np.max(np.abs(jumps)))


def _count_zeros(f, rect, per_edge=64, max_pts=65536):
    """Winding number of f around a rectangle with adaptive edge sampling."""
    re0, re1, im0, im1 = rect
    pts = _contour_points(re0, re1, im0, im1, per_edge)
    for attempt in range(4):
        vals = f(pts)
        if np.min(np.abs(vals)) < 1e-12 * np.median(np.abs(vals)):
            # near-zero on the contour: nudge the rectangle outward
            eps = 1e-4 * max(re1 - re0, im1 - im0) * (attempt + 1)
            pts = _contour_points(re0 - eps, re1 + eps, im0 - eps, im1 + eps,
                                  per_edge)
            continue
        w, max_jump = _winding(vals)
        if max_jump < 1.2 and abs(w - round(w)) < 1e-3:
            return int(round(w))
        if len(pts) * 2 > max_pts:
            break
        # refine globally: double the sampling density
        per_edge *= 2
        pts = _contour_points(re0, re1, im0, im1, per_edge)
    raise SolverError(
        f"argument-principle count did not settle on rectangle {rect}")


def _newton_polish(f, df, z0, rect, max_iter=60):
    re0, re1, im0, im1 = rect
    margin = 0.5 * max(re1 - re0, im1 - im0) + 1e-9
    z = complex(z0)
    for _ in range(max_iter):
        fz = complex(f(np.array([z]))[0])
        if abs(fz) <= 1e-13 * (1.0 + abs(z)):
            return z
        dfz = complex(df(np.array([z]))[0])
        if dfz == 0:
            return None
        step = fz / dfz
        z -= step
        if not (re0 - margin <= z.real <= re1 + margin
                and im0 - margin <= z.imag <= im1 + margin):
            return None
        if abs(step) <= 1e-14 * (1.0 + abs(z)):
            fz = complex(f(np.array([z]))[0])
            if abs(fz) <= 1e-11 * (1.0 + abs(z)):
                return z
            return None
    return None


def _roots_in_rect(f, df, rect, depth=0):
    k = _count_zeros(f, rect)
    if k == 0:
        return []
    re0, re1, im0, im1 = rect
    center = complex(0.5 * (re0 + re1), 0.5 * (im0 + im1))
    if k == 1:
        z = _newton_polish(f, df, center, rect)
        if z is not None:
            return [z]
    if depth > 48 or max(re1 - re0, im1 - im0) < 1e-9:
        z = _newton_polish(f, df, center, rect)
        return [z] if z is not None else []
    # split the longer side, slightly off-center to dodge symmetric zeros
    frac = 0.5 + 2.0 ** -7
    if re1 - re0 >= im1 - im0:
        cut = re0 + frac * (re1 - re0)
        sub = [(re0, cut, im0, im1), (cut, re1, im0, im1)]
    else:
        cut = im0 + frac * (im1 - im0)
        sub = [(re0, re1, im0, cut), (re0, re1, cut, im1)]
    roots = []
    for r in sub:
        roots.extend(_roots_in_rect(f, df, r, depth + 1))
    return roots


def _dedupe(roots, tol=1e-7):
    out = []
    for z in sorted(roots, key=lambda z: (z.real, z.imag)):
        if all(abs(z - w) > tol for w in out):
            out.append(z)
    return out


def endemic_char_roots(rates, ages, grid, J_max, re_min=None, re_max=None,
                       im_max=None):
    """Characteristic roots per spatial eigenvalue for the endemic state.

    For each of the first J_max discrete Laplacian eigenvalues mu_j, all
    roots of the characteristic function inside the rectangle
    [re_min, re_max] x [-im_max, im_max] are located (defaults
    -5*kappa1, 2*kappa1, 50/a_m).  Returns a list of
    (mu_j, [(root, |F| residual), ...]).
    """
    if grid.delta != NEUMANN:
        raise ConfigurationError("characteristic roots need Neumann conditions")
    params = _CharParams(rates, ages)
    if params.R0 <= 1.0:
        raise ConfigurationError(
            f"endemic characteristic equation needs R0 > 1, got {params.R0:.6g}")
    k1 = rates.kappa1
    re_min = -5.0 * k1 if re_min is None else re_min
    re_max = 2.0 * k1 if re_max is None else re_max
    im_max = 50.0 / ages.a_m if im_max is None else im_max

    mu, _ = laplacian_eigenpairs(grid, J_max)
    results = []
    for mu_j in mu:
        mu_j = float(mu_j)

        def f(z, _mu=mu_j):
            return params.G(z, _mu)

        def df(z, _mu=mu_j):
            return params.dG(z, _mu)

        rect = (re_min, re_max, -im_max, im_max)
        roots = _dedupe(_roots_in_rect(f, df, rect))
        polished = []
        for z in roots:
            res = abs(complex(params.F(np.array([z]), mu_j)[0]))
            if res <= 1e-8:
                polished.append((z, res))
        results.append((mu_j, polished))
    return results


# ---------------------------------------------------------------------------
# verdicts


def classify_stability(steady, grid, ages, rates, J_max=8):
    """Stability verdict per the reduced threshold criteria.

    Trivial state: sign of kappa1 - mu0.  Disease-free: sign of the spectral
    bound s0 (consistent with R0 vs 1).  Endemic: characteristic-root sweep,
    available for homogeneous rates under Neumann conditions only (otherwise
    the verdict stays inconclusive).
    """
    k1, k2 = rates.kappa1, rates.kappa2
    if steady.kind == TRIVIAL:
        mu, _ = laplacian_eigenpairs(grid, 1)
        gap = k1 - float(mu[0])
        if gap > REAL_PART_TOL:
            verdict = UNSTABLE
        elif gap < -REAL_PART_TOL:
            verdict = STABLE
        else:
            verdict = INCONCLUSIVE
        return SpectralReport(TRIVIAL, 0.0, lambda0=float(mu[0]),
                              verdict=verdict)

    if steady.kind == DISEASE_FREE:
        if not steady.exists:
            raise ConfigurationError("cannot classify a nonexistent state")
        R0 = basic_reproduction_number(steady, grid, ages, rates)
        s0 = spectral_bound(steady.S_star, grid, ages, rates)
        lam0, _ = principal_eigenvalue(2.0 * k1 * steady.S_star / k2, grid)
        if s0 < -REAL_PART_TOL:
            verdict = STABLE
        elif s0 > REAL_PART_TOL:
            verdict = UNSTABLE
        else:
            verdict = INCONCLUSIVE
        return SpectralReport(DISEASE_FREE, R0, s0=s0, lambda0=lam0,
                              verdict=verdict)

    if steady.kind == ENDEMIC:
        if grid.delta != NEUMANN or not rates.homogeneous:
            R0 = 0.0
            try:
                R0 = closed_form_r0(ages, rates)
            except ConfigurationError:
                pass
            return SpectralReport(ENDEMIC, R0, verdict=INCONCLUSIVE)
        R0 = closed_form_r0(ages, rates)
        root_list = endemic_char_roots(rates, ages, grid, J_max)
        flat = [(mu_j, z, res) for mu_j, roots in root_list
                for z, res in roots]
        re_parts = [z.real for _, z, _ in flat]
        if any(re > REAL_PART_TOL for re in re_parts):
            verdict = UNSTABLE
        elif all(re < -REAL_PART_TOL for re in re_parts):
            verdict = STABLE
        else:
            verdict = INCONCLUSIVE
        return SpectralReport(ENDEMIC, R0, char_roots=flat, verdict=verdict)

    raise ConfigurationError(f"unknown steady-state kind {steady.kind!r}")


# ---------------------------------------------------------------------------
# dense cross-check oracle for the coupled linearization


def _chebyshev(n_cheb, a_m):
    """Chebyshev nodes (ascending on [0, a_m]), differentiation matrix, and
    Clenshaw-Curtis quadrature weights."""
    N = n_cheb
    theta = np.pi * np.arange(N + 1) / N
    xc = np.cos(theta)                      # descending on [-1, 1]
    c = np.ones(N + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(N + 1)
    X = np.tile(xc, (N + 1, 1)).T
    dX = X - X.T + np.eye(N + 1)
    D = np.outer(c, 1.0 / c) / dX
    D -= np.diag(D.sum(axis=1))
    # map a = a_m (1 - x)/2: ascending ages, d/da = -(2/a_m) d/dx
    a = a_m * (1.0 - xc) / 2.0
    Da = -(2.0 / a_m) * D
    # Clenshaw-Curtis weights on [-1, 1] (Trefethen's clencurt)
    w = np.zeros(N + 1)
    v = np.ones(N - 1)
    th = theta[1:-1]
    if N % 2 == 0:
        w[0] = w[-1] = 1.0 / (N ** 2 - 1.0)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2.0 * k * th) / (4.0 * k ** 2 - 1.0)
        v -= np.cos(N * th) / (N ** 2 - 1.0)
    else:
        w[0] = w[-1] = 1.0 / N ** 2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2.0 * k * th) / (4.0 * k ** 2 - 1.0)
    w[1:-1] = 2.0 * v / N
    return a, Da, w * a_m / 2.0


def dense_linearization_eigs(steady, grid, ages, rates, n_cheb=40):
    """Eigenvalues of the coupled linearization, discretized independently.

    Age is resolved by Chebyshev collocation with the renewal boundary row
    imposed as a constraint (generalized eigenproblem); space uses the same
    grid as the production path.  Desk-scale cross-check only: requires
    grid.n <= 32 and n_cheb <= 40.  Returns (eigenvalues, I0_modes) with
    I0_modes the age-0 slices of the eigenvectors, for mode identification.
    """
    if grid.n > 32 or n_cheb > 40:
        raise ConfigurationError(
            "dense oracle limited to n <= 32, n_cheb <= 40")
    n = grid.n
    a_c, Da, cw = _chebyshev(n_cheb, ages.a_m)
    N1 = n_cheb + 1

    def at_cheb(table):
        return np.stack([np.interp(a_c, ages.nodes, table[:, j])
                         for j in range(n)], axis=1)

    b_c = at_cheb(rates.b)
    m_c = at_cheb(rates.m)
    r_c = at_cheb(rates.r)
    d_c = np.interp(a_c, ages.nodes, rates.d)

    S_star = np.asarray(steady.S_star, dtype=float)
    I_star = steady.I_star
    if I_star is None:
        I_star = np.zeros((ages.Na + 1, n))
    q_star = (ages.weights[:, None] * rates.b * I_star).sum(axis=0)

    k1, k2 = rates.kappa1, rates.kappa2
    L = laplacian_matrix(grid)
    dim = n + N1 * n
    A = np.zeros((dim, dim))
    B = np.eye(dim)

    sl_S = slice(0, n)

    def sl_I(i):
        return slice(n + i * n, n + (i + 1) * n)

    A[sl_S, sl_S] = L + np.diag(k1 - 2.0 * k1 * S_star / k2 - q_star)
    for i in range(N1):
        A[sl_S, sl_I(i)] += np.diag(cw[i] * (r_c[i] - S_star * b_c[i]))

    for i in range(1, N1):
        for j in range(N1):
            A[sl_I(i), sl_I(j)] += -Da[i, j] * np.eye(n)
        A[sl_I(i), sl_I(i)] += d_c[i] * L - np.diag(m_c[i] + r_c[i])

    # renewal constraint replaces the age-0 dynamics row
    B[sl_I(0), sl_I(0)] = 0.0
    A[sl_I(0), sl_I(0)] = np.eye(n)
    for j in range(N1):
        A[sl_I(0), sl_I(j)] += -np.diag(cw[j] * S_star * b_c[j])
    A[sl_I(0), sl_S] = -np.diag(q_star)

    vals, vecs = scipy.linalg.eig(A, B)
    keep = np.isfinite(vals) & (np.abs(vals) < 1e8)
    vals = vals[keep]
    I0_modes = vecs[n:2 * n, keep].T
    order = np.argsort(-vals.real)
    return vals[order], I0_modes[order]
