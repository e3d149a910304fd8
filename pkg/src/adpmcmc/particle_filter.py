"""Bootstrap (SIR) particle filter with adaptive stratified resampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .models import LOG_2PI, SKELETON, ModelId, Params


@dataclass(frozen=True)
class ParticleCloud:
    """Weighted particles at one time step.

    ``parent[i]`` indexes the particle of the previous cloud that ``x[i]``
    was propagated from.
    """

    x: np.ndarray
    logw: np.ndarray
    W: np.ndarray
    parent: np.ndarray


@dataclass
class FilterOutput:
    """Result of one SIR pass. Per-step arrays are shaped (T, L)."""

    x: np.ndarray
    logw: np.ndarray
    W: np.ndarray
    parent: np.ndarray
    log_marginal: float
    resampled: np.ndarray
    x0: float

    @property
    def T(self) -> int:
        return self.x.shape[0]

    @property
    def L(self) -> int:
        return self.x.shape[1]

    def cloud(self, t: int) -> ParticleCloud:
        return ParticleCloud(self.x[t], self.logw[t], self.W[t], self.parent[t])

    @property
    def clouds(self) -> list[ParticleCloud]:
        return [self.cloud(t) for t in range(self.T)]

    # The filtering clouds are what the Fisher-information recursion consumes.
    filter_snapshots = clouds

    def filtered_mean(self) -> np.ndarray:
        return np.einsum("tl,tl->t", self.W, np.nan_to_num(self.x))


def ess(W) -> float:
    """Effective sample size 1 / sum(W_i^2) of normalized weights."""
    W = np.asarray(W, dtype=float)
    return float(1.0 / np.dot(W, W))


def stratified_resample(W, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Stratified resampling: one uniform per stratum [(k + v_k) / n]."""
    W = np.asarray(W, dtype=float)
    n = len(W) if n is None else n
    u = (np.arange(n) + rng.random(n)) / n
    c = np.cumsum(W)
    c /= c[-1]
    return np.minimum(np.searchsorted(c, u, side="right"), len(W) - 1)


def _check(L, gamma, y):
    if L < 1:
        raise ValueError(f"particle count must be >= 1, got {L}")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    y = np.ascontiguousarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] < 1:
        raise ValueError("run_sir needs a 1-d series with at least one observation")
    return y


def run_sir(
    model: ModelId,
    p: Params,
    y,
    L: int,
    gamma: float = 1.0,
    rng: np.random.Generator | None = None,
    resample_threshold: float = 0.8,
) -> FilterOutput:
    """Run the SIR filter at fixed parameters.

    Particles start at ``p.x0`` and are propagated through the transition
    density; step t is weighted by ``p(y_t | x_t) ** gamma``.  Resampling
    (stratified) happens when ESS < ``resample_threshold * L``; otherwise
    normalized weights are carried to the next step.

    ``log_marginal`` is the log of the unbiased estimate of the (tempered)
    marginal likelihood, ``sum_t log sum_i W_{t-1}^i w_t^i``.  If every
    particle gets zero weight at some step it is -inf and later steps are
    left undefined (NaN states, uniform weights).
    """
    y = _check(L, gamma, y)
    if rng is None:
        rng = np.random.default_rng()
    T = y.shape[0]
    X = np.full((T, L), np.nan)
    LW = np.full((T, L), -np.inf)
    Wn = np.full((T, L), 1.0 / L)
    A = np.zeros((T, L), dtype=np.intp)
    resampled = np.zeros(T, dtype=np.bool_)
    log_marg = _kernels.sir(
        _kernels.MODEL_CODE[model.value], np.asarray(p.b, dtype=float), float(p.x0),
        math.sqrt(p.sigma_eps2), float(p.sigma_w2), y, int(L), float(gamma),
        float(resample_threshold), rng, X, LW, Wn, A, resampled,
    )
    return FilterOutput(X, LW, Wn, A, float(log_marg), resampled, float(p.x0))


def run_sir_numpy(
    model: ModelId,
    p: Params,
    y,
    L: int,
    gamma: float = 1.0,
    rng: np.random.Generator | None = None,
    resample_threshold: float = 0.8,
) -> FilterOutput:
    """Vectorised numpy twin of :func:`run_sir` (same random stream usage)."""
    y = _check(L, gamma, y)
    if rng is None:
        rng = np.random.default_rng()
    T = y.shape[0]
    f = SKELETON[model]
    b = p.b
    sd = math.sqrt(p.sigma_eps2)
    half_log_r = 0.5 * (LOG_2PI + math.log(p.sigma_w2))
    inv_2r = 0.5 / p.sigma_w2
    log_L = math.log(L)

    X = np.full((T, L), np.nan)
    LW = np.full((T, L), -np.inf)
    Wn = np.full((T, L), 1.0 / L)
    A = np.zeros((T, L), dtype=np.intp)
    resampled = np.zeros(T, dtype=bool)

    x_prev = np.full(L, float(p.x0))
    logw_prev = np.full(L, -log_L)
    parents = np.arange(L)
    log_marg = 0.0

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for t in range(T):
            x = f(x_prev, b) + sd * rng.standard_normal(L)
            inc = -half_log_r - inv_2r * (y[t] - x) ** 2
            if gamma != 1.0:
                inc *= gamma
            lw = logw_prev + inc
            lw[np.isnan(lw)] = -np.inf
            m = lw.max()
            if not np.isfinite(m):
                log_marg = -np.inf
                A[t] = parents
                break
            s = np.exp(lw - m)
            tot = s.sum()
            log_marg += m + math.log(tot)
            W = s / tot
            X[t], LW[t], Wn[t], A[t] = x, lw, W, parents
            if 1.0 / np.dot(W, W) < resample_threshold * L:
                idx = stratified_resample(W, rng)
                x_prev = x[idx]
                parents = idx
                logw_prev = np.full(L, -log_L)
                resampled[t] = True
            else:
                x_prev = x
                parents = np.arange(L)
                logw_prev = np.log(W)

    return FilterOutput(X, LW, Wn, A, float(log_marg), resampled, float(p.x0))


def sample_path(out: FilterOutput, rng: np.random.Generator) -> np.ndarray:
    """Draw one trajectory from the particle approximation of p(x_{1:T} | y)."""
    T = out.T
    c = np.cumsum(out.W[-1])
    k = min(int(np.searchsorted(c, rng.random() * c[-1], side="right")), out.L - 1)
    path = np.empty(T)
    path[-1] = out.x[-1, k]
    for t in range(T - 1, 0, -1):
        k = out.parent[t, k]
        path[t - 1] = out.x[t - 1, k]
    return path
