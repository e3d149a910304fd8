"""Compiled inner loops for the particle filter.

Random numbers are drawn from the caller's ``numpy.random.Generator`` in the
same order and block sizes as the pure-numpy filter, so both paths consume
identical streams.
"""

from __future__ import annotations

import math

import numba
import numpy as np

MODEL_CODE = {"M0": 0, "M1": 1, "M2": 2, "M3": 3, "M4": 4}
_LOG_2PI = math.log(2.0 * math.pi)


@numba.njit(cache=True, inline="always")
def skeleton(code, x, b):
    if code == 0:
        return x + b[0]
    if code == 1:
        return x + b[0] + b[1] * math.exp(x)
    if code == 2:
        return x + b[0] + b[1] * math.exp(b[2] * x)
    if code == 3:
        n = math.exp(x)
        return 2.0 * x - math.log(b[2] + n) + b[0] + b[1] * n
    n = math.exp(x)
    return x + b[0] + b[1] * n + b[2] * n * n


@numba.njit(cache=True, inline="always")
def skeleton_deriv(code, x, b):
    if code == 0:
        return 1.0
    if code == 1:
        return 1.0 + b[1] * math.exp(x)
    if code == 2:
        return 1.0 + b[1] * b[2] * math.exp(b[2] * x)
    if code == 3:
        n = math.exp(x)
        return 2.0 - n / (b[2] + n) + b[1] * n
    n = math.exp(x)
    return 1.0 + b[1] * n + 2.0 * b[2] * n * n


@numba.njit(cache=True)
def stratified_indices(W, u01):
    n = u01.shape[0]
    L = W.shape[0]
    c = np.cumsum(W)
    c /= c[L - 1]
    out = np.empty(n, dtype=np.intp)
    j = 0
    for k in range(n):
        u = (k + u01[k]) / n
        while j < L - 1 and c[j] <= u:
            j += 1
        out[k] = j
    return out


@numba.njit(cache=True)
def sir(code, b, x0, sd, sigma_w2, y, L, gamma, ess_frac, rng, X, LW, Wn, A, resampled):
    T = y.shape[0]
    half_log_r = 0.5 * (_LOG_2PI + math.log(sigma_w2))
    inv_2r = 0.5 / sigma_w2
    log_L = math.log(L)
    x_prev = np.full(L, x0)
    logw_prev = np.full(L, -log_L)
    parents = np.arange(L)
    lw = np.empty(L)
    x = np.empty(L)
    log_marg = 0.0
    for t in range(T):
        z = rng.standard_normal(L)
        m = -np.inf
        for i in range(L):
            xi = skeleton(code, x_prev[i], b) + sd * z[i]
            x[i] = xi
            inc = -half_log_r - inv_2r * (y[t] - xi) ** 2
            if gamma != 1.0:
                inc *= gamma
            v = logw_prev[i] + inc
            if math.isnan(v):
                v = -np.inf
            lw[i] = v
            if v > m:
                m = v
        if not math.isfinite(m):
            A[t, :] = parents
            return -np.inf
        tot = 0.0
        for i in range(L):
            Wn[t, i] = math.exp(lw[i] - m)
            tot += Wn[t, i]
        log_marg += m + math.log(tot)
        ssq = 0.0
        for i in range(L):
            Wn[t, i] /= tot
            ssq += Wn[t, i] * Wn[t, i]
            X[t, i] = x[i]
            LW[t, i] = lw[i]
            A[t, i] = parents[i]
        if 1.0 / ssq < ess_frac * L:
            idx = stratified_indices(Wn[t], rng.random(L))
            for i in range(L):
                x_prev[i] = x[idx[i]]
                parents[i] = idx[i]
                logw_prev[i] = -log_L
            resampled[t] = True
        else:
            for i in range(L):
                x_prev[i] = x[i]
                parents[i] = i
                w = Wn[t, i]
                logw_prev[i] = math.log(w) if w > 0.0 else -np.inf
    return log_marg


@numba.njit(cache=True)
def phi_moments(code, b, x0, X, Wn, T_valid):
    """Weighted first and second moments of the skeleton derivative.

    Row t uses the filtering cloud at t - 1; row 0 uses the point mass x0.
    """
    T = X.shape[0]
    out = np.empty((T, 2))
    d = skeleton_deriv(code, x0, b)
    out[0, 0] = d
    out[0, 1] = d * d
    for t in range(1, T):
        if t > T_valid:
            out[t, 0] = np.nan
            out[t, 1] = np.nan
            continue
        s1 = 0.0
        s2 = 0.0
        for i in range(X.shape[1]):
            w = Wn[t - 1, i]
            if w > 0.0:
                d = skeleton_deriv(code, X[t - 1, i], b)
                s1 += w * d
                s2 += w * d * d
        out[t, 0] = s1
        out[t, 1] = s2
    return out
