"""Fused numba loops for the ensemble propagator and its GRAPE sweep.

Same arithmetic as the numpy reference path in :mod:`somapulse.engine`
(midpoint Hamiltonian, Taylor exponential with scaling and squaring, prefix
products, backward sweep), but without per-op temporaries.
"""
from __future__ import annotations

import numpy as np
import numba as nb


@nb.njit(cache=True, inline="always")
def _matmul(a, b, out):
    d = a.shape[0]
    for i in range(d):
        for j in range(d):
            s = 0j
            for k in range(d):
                s += a[i, k] * b[k, j]
            out[i, j] = s


@nb.njit(cache=True)
def _expm_into(a, out, tmp, tmp2):
    """out = exp(-i a) for Hermitian a (destroys nothing)."""
    d = a.shape[0]
    norm = 0.0
    for j in range(d):
        s = 0.0
        for i in range(d):
            s += abs(a[i, j])
        if s > norm:
            norm = s
    squarings = 0
    theta = norm
    while theta > 0.25:
        theta *= 0.5
        squarings += 1
    fac = 1.0 / (2.0**squarings)
    order = 1
    term = theta
    while term > 1e-17 and order < 30:
        order += 1
        term *= theta / order
    # x = -i a fac ; Horner: u = I + x/order ; u = I + x u / k
    for i in range(d):
        for j in range(d):
            v = -1j * a[i, j] * fac / order
            out[i, j] = v + (1.0 if i == j else 0.0)
    for k in range(order - 1, 0, -1):
        for i in range(d):
            for j in range(d):
                s = 0j
                for m in range(d):
                    s += a[i, m] * out[m, j]
                tmp[i, j] = -1j * fac * s / k + (1.0 if i == j else 0.0)
        for i in range(d):
            for j in range(d):
                out[i, j] = tmp[i, j]
    for _ in range(squarings):
        _matmul(out, out, tmp2)
        for i in range(d):
            for j in range(d):
                out[i, j] = tmp2[i, j]


@nb.njit(cache=True)
def step_unitaries(h0, hc, u, dt):
    B, N, M = u.shape
    d = h0.shape[1]
    out = np.empty((B, N, d, d), dtype=np.complex128)
    a = np.empty((d, d), dtype=np.complex128)
    tmp = np.empty((d, d), dtype=np.complex128)
    tmp2 = np.empty((d, d), dtype=np.complex128)
    res = np.empty((d, d), dtype=np.complex128)
    for b in range(B):
        for n in range(N):
            for i in range(d):
                for j in range(d):
                    s = h0[b, i, j]
                    for m in range(M):
                        s += u[b, n, m] * hc[b, m, i, j]
                    a[i, j] = s * dt[b]
            _expm_into(a, res, tmp, tmp2)
            out[b, n] = res
    return out


@nb.njit(cache=True)
def chain_trace(steps, gdag):
    """``tau_b = Tr(U_N..U_1 G^dag)`` and the final propagators."""
    B, N, d, _ = steps.shape
    U = np.empty((B, d, d), dtype=np.complex128)
    tau = np.empty(B, dtype=np.complex128)
    cur = np.empty((d, d), dtype=np.complex128)
    nxt = np.empty((d, d), dtype=np.complex128)
    for b in range(B):
        cur[:, :] = steps[b, 0]
        for n in range(1, N):
            _matmul(steps[b, n], cur, nxt)
            cur[:, :] = nxt
        U[b] = cur
        s = 0j
        for i in range(d):
            for k in range(d):
                s += cur[i, k] * gdag[b, k, i]
        tau[b] = s
    return U, tau


@nb.njit(cache=True)
def grape_sweep(steps, gdag, hc, symmetric):
    """Return ``tau (B,)`` and ``h (B, N, M)`` with ``h[b, j, k] = <H_k>_j`` (see engine docs)."""
    B, N, d, _ = steps.shape
    M = hc.shape[1]
    tau = np.empty(B, dtype=np.complex128)
    hk = np.empty((B, N, M), dtype=np.complex128)
    P = np.empty((N + 1, d, d), dtype=np.complex128)
    S = np.empty((d, d), dtype=np.complex128)
    t1 = np.empty((d, d), dtype=np.complex128)
    Mj = np.empty((d, d), dtype=np.complex128)
    prev = np.empty(M, dtype=np.complex128)
    for b in range(B):
        for i in range(d):
            for j in range(d):
                P[0, i, j] = 1.0 if i == j else 0.0
        for n in range(N):
            _matmul(steps[b, n], P[n], P[n + 1])
        for i in range(d):
            for j in range(d):
                S[i, j] = 1.0 if i == j else 0.0
        # walk j = N..0 with S = S_{j+1}; M_j = P_j G^dag S_{j+1}
        for jj in range(N, -1, -1):
            _matmul(P[jj], gdag[b], t1)
            _matmul(t1, S, Mj)
            if jj == N:
                s = 0j
                for i in range(d):
                    s += Mj[i, i]
                tau[b] = s
            for m in range(M):
                s = 0j
                for i in range(d):
                    for k in range(d):
                        s += hc[b, m, i, k] * Mj[k, i]
                # M_j contributes to step j (right end) and step j+1 (left end)
                if jj >= 1:
                    if symmetric:
                        hk[b, jj - 1, m] = 0.5 * s
                    else:
                        hk[b, jj - 1, m] = s
                if jj < N and symmetric:
                    hk[b, jj, m] += 0.5 * s
            if jj >= 1:
                _matmul(S, steps[b, jj - 1], t1)
                S[:, :] = t1
    return tau, hk
