"""1-D spatial grid with the discrete Laplacian under Dirichlet or Neumann closure.

The domain (x_min, x_max) is discretized with a uniform mesh.  For Dirichlet
conditions (delta=0) boundary nodes are eliminated (u=0 there) and the grid
holds the n interior nodes; for Neumann conditions (delta=1) the grid holds
all n nodes and the stencil uses second-order ghost-node reflection.

Fields are plain 1-D float arrays of length ``grid.n``.  The discrete inner
product is ``sum(weights * u * v)`` with trapezoidal weights, under which the
Laplacian is self-adjoint for both boundary types.
"""

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from .errors import ConfigurationError, SolverError

DIRICHLET = 0
NEUMANN = 1


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Uniform 1-D mesh with boundary flag delta (0 Dirichlet, 1 Neumann)."""

    x_min: float
    x_max: float
    n: int
    delta: int
    h: float
    x: np.ndarray        # node coordinates, shape (n,)
    weights: np.ndarray  # quadrature weights including h, shape (n,)

    @property
    def key(self):
        """Hashable signature used for propagator caches."""
        return (self.x_min, self.x_max, self.n, self.delta)

    def integrate(self, u):
        """Discrete integral over the domain."""
        return float(self.weights @ np.asarray(u))

    def inner(self, u, v):
        """Discrete L2 inner product."""
        return float(self.weights @ (np.asarray(u) * np.asarray(v)))


def build_grid(x_min, x_max, n, delta):
    """Build a SpatialGrid.

    Parameters
    ----------
    x_min, x_max : float
        Domain endpoints, x_min < x_max.
    n : int
        Node count (interior nodes for Dirichlet, all nodes for Neumann),
        n >= 3.
    delta : {0, 1}
        Boundary flag: 0 Dirichlet, 1 Neumann.
    """
    if not (math.isfinite(x_min) and math.isfinite(x_max)):
        raise ConfigurationError("grid endpoints must be finite")
    if not x_min < x_max:
        raise ConfigurationError(f"need x_min < x_max, got ({x_min}, {x_max})")
    n = int(n)
    if n < 3:
        raise ConfigurationError(f"need n >= 3, got {n}")
    if delta not in (0, 1):
        raise ConfigurationError(f"delta must be 0 or 1, got {delta}")

    length = x_max - x_min
    if delta == DIRICHLET:
        h = length / (n + 1)
        x = x_min + h * np.arange(1, n + 1)
        # boundary values vanish, so the composite trapezoid rule reduces to
        # h * sum over interior nodes
        weights = np.full(n, h)
    else:
        h = length / (n - 1)
        x = x_min + h * np.arange(n)
        weights = np.full(n, h)
        weights[0] = weights[-1] = h / 2.0
    return SpatialGrid(float(x_min), float(x_max), n, int(delta), h, x, weights)


def laplacian_diagonals(grid):
    """(lower, main, upper) diagonals of the discrete Laplacian Delta_B."""
    n, h2 = grid.n, grid.h ** 2
    main = np.full(n, -2.0 / h2)
    lower = np.full(n - 1, 1.0 / h2)
    upper = np.full(n - 1, 1.0 / h2)
    if grid.delta == NEUMANN:
        upper[0] = 2.0 / h2
        lower[-1] = 2.0 / h2
    return lower, main, upper


def laplacian_matrix(grid):
    """Dense matrix of Delta_B (desk-scale sizes only)."""
    lower, main, upper = laplacian_diagonals(grid)
    return np.diag(main) + np.diag(lower, -1) + np.diag(upper, 1)


def apply_laplacian(grid, u):
    """Apply the 3-point discrete Laplacian with the grid's boundary closure."""
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n,):
        raise ConfigurationError(
            f"field length {u.shape} does not match grid n={grid.n}")
    h2 = grid.h ** 2
    out = np.empty_like(u)
    out[1:-1] = (u[:-2] - 2.0 * u[1:-1] + u[2:]) / h2
    if grid.delta == DIRICHLET:
        out[0] = (-2.0 * u[0] + u[1]) / h2
        out[-1] = (u[-2] - 2.0 * u[-1]) / h2
    else:
        out[0] = 2.0 * (u[1] - u[0]) / h2
        out[-1] = 2.0 * (u[-2] - u[-1]) / h2
    return out


def _banded(alpha, grid):
    """LAPACK banded form of (alpha*I - Delta_B)."""
    lower, main, upper = laplacian_diagonals(grid)
    ab = np.zeros((3, grid.n))
    ab[0, 1:] = -upper
    ab[1, :] = alpha - main
    ab[2, :-1] = -lower
    return ab


def solve_helmholtz(grid, alpha, rhs):
    """Solve (alpha*I - Delta_B) u = rhs by a banded direct solve.

    One step of iterative refinement keeps the residual below
    1e-12 * ||rhs||_inf; a residual beyond that (alpha at or within ~1e-12 of
    a discrete eigenvalue) raises SolverError.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (grid.n,):
        raise ConfigurationError(
            f"field length {rhs.shape} does not match grid n={grid.n}")
    ab = _banded(alpha, grid)
    scale = float(np.max(np.abs(rhs)))
    if scale == 0.0:
        return np.zeros(grid.n)
    tol = 1e-12 * scale

    def residual(u):
        return rhs - (alpha * u - apply_laplacian(grid, u))

    try:
        u = solve_banded((1, 1), ab, rhs)
        for _ in range(2):
            r = residual(u)
            if np.max(np.abs(r)) <= tol:
                break
            u = u + solve_banded((1, 1), ab, r)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise SolverError(f"banded solve failed: {exc}") from exc
    r = residual(u)
    if not np.all(np.isfinite(u)) or np.max(np.abs(r)) > tol:
        raise SolverError(
            f"Helmholtz solve singular or ill-conditioned at alpha={alpha!r}: "
            f"residual {np.max(np.abs(r)):.3e} exceeds {tol:.3e}")
    return u


def laplacian_eigenpairs(grid, k):
    """k smallest eigenpairs of -Delta_B.

    Returns ``(mu, phi)`` with ``mu`` ascending of shape (k,) and ``phi`` of
    shape (k, n), orthonormal in the discrete weighted inner product.  For
    Neumann grids mu[0] = 0 with constant phi[0].
    """
    if not 1 <= k <= grid.n:
        raise ConfigurationError(f"need 1 <= k <= n={grid.n}, got k={k}")
    lower, main, upper = laplacian_diagonals(grid)
    # -Delta_B symmetrized by D^(1/2) (-Delta) D^(-1/2), D = trapezoid factors
    wf = grid.weights / grid.h
    d = -main
    e = -upper * np.sqrt(wf[:-1] / wf[1:])
    mu, v = eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1))
    phi = (v / np.sqrt(wf)[:, None]).T
    nrm = np.sqrt(np.einsum("j,ij,ij->i", grid.weights, phi, phi))
    phi /= nrm[:, None]
    for row in phi:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return mu, phi


_HEAT_CACHE = {}
_HEAT_LOCK = threading.Lock()


def heat_cache():
    """Shared dense-propagator cache (read-mostly after warmup)."""
    return _HEAT_CACHE, _HEAT_LOCK
