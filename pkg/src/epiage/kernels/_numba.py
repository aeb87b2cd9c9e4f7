"""Numba-compiled implementations of the hot time-stepping kernels."""

import numpy as np
from numba import njit

BACKEND = "numba"


@njit(cache=True)
def transport_apply(E, I, out):
    Na = E.shape[0]
    n = E.shape[1]
    for j in range(n):
        out[0, j] = 0.0
    for k in range(Na):
        out[k + 1] = E[k] @ I[k]
    return out


@njit(cache=True)
def tridiag_solve(dl, dd, du, rhs):
    # Thomas algorithm; diagonally dominant systems only
    n = dd.shape[0]
    cp = np.empty(n)
    x = np.empty(n)
    cp[0] = du[0] / dd[0]
    x[0] = rhs[0] / dd[0]
    for i in range(1, n):
        denom = dd[i] - dl[i - 1] * cp[i - 1]
        if i < n - 1:
            cp[i] = du[i] / denom
        x[i] = (rhs[i] - dl[i - 1] * x[i - 1]) / denom
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x


@njit(cache=True)
def step_core(S, I, E, bw, rw, kappa1, kappa2, dt, dl, dd, du, out_I):
    Na1 = I.shape[0]
    n = I.shape[1]
    press = np.zeros(n)
    recov = np.zeros(n)
    for k in range(Na1):
        for j in range(n):
            press[j] += bw[k, j] * I[k, j]
            recov[j] += rw[k, j] * I[k, j]

    S_star = np.empty(n)
    for j in range(n):
        S_star[j] = (S[j] + dt * (kappa1 * S[j] + recov[j])) / (
            1.0 + dt * (kappa1 * S[j] / kappa2 + press[j]))
    S_new = tridiag_solve(dl, dd, du, S_star / dt)

    transport_apply(E, I, out_I)
    partial = np.zeros(n)
    for k in range(1, Na1):
        for j in range(n):
            partial[j] += bw[k, j] * out_I[k, j]
    min_denom = 1.0 - S_new[0] * bw[0, 0]
    for j in range(n):
        d = 1.0 - S_new[j] * bw[0, j]
        if d < min_denom:
            min_denom = d
    if min_denom > 0.0:
        for j in range(n):
            out_I[0, j] = S_new[j] * partial[j] / (1.0 - S_new[j] * bw[0, j])
    return S_star, S_new, out_I, min_denom


@njit(cache=True)
def transport_sweep_weighted(P, c, u):
    n = P.shape[1]
    out = np.zeros(n)
    for k in range(P.shape[0]):
        out += c[k] * (P[k] @ u)
    return out
