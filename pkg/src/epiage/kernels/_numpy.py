"""Pure numpy/scipy implementations of the hot time-stepping kernels."""

import numpy as np
from scipy.linalg import solve_banded

BACKEND = "numpy"


def transport_apply(E, I, out):
    """out[k+1] = E[k] @ I[k] for k = 0..Na-1; out[0] is left at zero."""
    out[0] = 0.0
    np.matmul(E, I[:-1, :, None], out=out[1:, :, None])
    return out


def tridiag_solve(dl, dd, du, rhs):
    """Solve the tridiagonal system given its three diagonals."""
    n = dd.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = du
    ab[1, :] = dd
    ab[2, :-1] = dl
    return solve_banded((1, 1), ab, rhs)


def step_core(S, I, E, bw, rw, kappa1, kappa2, dt, dl, dd, du, out_I):
    """One locked step: transport, Patankar reaction, implicit diffusion, renewal.

    (dl, dd, du) are the diagonals of (I/dt - Delta_B).  Returns
    (S_star, S_new, I_new, min_denom) where min_denom is the smallest renewal
    denominator (<= 0 signals that the age mesh is too coarse).
    """
    press = np.einsum("kj,kj->j", bw, I)
    recov = np.einsum("kj,kj->j", rw, I)
    S_star = (S + dt * (kappa1 * S + recov)) / (
        1.0 + dt * (kappa1 * S / kappa2 + press))
    S_new = tridiag_solve(dl, dd, du, S_star / dt)

    transport_apply(E, I, out_I)
    partial = np.einsum("kj,kj->j", bw[1:], out_I[1:])
    denom = 1.0 - S_new * bw[0]
    min_denom = float(denom.min())
    if min_denom > 0.0:
        out_I[0] = S_new * partial / denom
    return S_star, S_new, out_I, min_denom


def transport_sweep_weighted(P, c, u):
    """sum_k c[k] * (P[k] @ u) for a cumulative propagator stack P."""
    return np.einsum("k,kij,j->i", c, P, u)
