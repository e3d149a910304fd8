"""Chain diagnostics: Geweke scores, autocorrelation, blocked RMSE, acceptance."""

from __future__ import annotations

import math
import warnings
from typing import Sequence

import numpy as np


def _batch_mean_var(seg: np.ndarray, n_batches: int) -> float:
    """Variance of the segment mean estimated from non-overlapping batch means."""
    k = max(2, min(n_batches, len(seg) // 2))
    size = len(seg) // k
    means = seg[: k * size].reshape(k, size).mean(axis=1)
    return float(means.var(ddof=1) / k)


def geweke_z(series, frac_a: float = 0.1, frac_b: float = 0.5, n_batches: int = 20) -> float:
    """Geweke z-score comparing the first ``frac_a`` and last ``frac_b`` of a chain.

    Each segment's mean variance comes from ``n_batches`` batch means.
    """
    x = np.asarray(series, dtype=float)
    if len(x) < 40:
        raise ValueError(f"geweke_z needs at least 40 samples, got {len(x)}")
    if not (0 < frac_a < 1 and 0 < frac_b < 1 and frac_a + frac_b <= 1):
        raise ValueError("segment fractions must be in (0, 1) and not overlap")
    a = x[: int(round(frac_a * len(x)))]
    b = x[len(x) - int(round(frac_b * len(x))):]
    diff = a.mean() - b.mean()
    v = _batch_mean_var(a, n_batches) + _batch_mean_var(b, n_batches)
    if v == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return float(diff / math.sqrt(v))


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation with the biased (1/n) normalisation."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if not 0 <= max_lag < n:
        raise ValueError(f"max_lag must lie in [0, {n - 1}]")
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0:
        warnings.warn("constant series: autocorrelation defined as 1 at every lag", RuntimeWarning)
        return np.ones(max_lag + 1)
    out = np.array([np.dot(xc[: n - k], xc[k:]) for k in range(max_lag + 1)]) / denom
    return np.clip(out, -1.0, 1.0)


def blocked_rmse(record, truth, n_blocks: int = 20) -> tuple[float, float]:
    """RMSE of the path MMSE against ``truth`` over contiguous blocks of draws.

    Returns the mean and the sample standard deviation across blocks.
    """
    paths = record.paths if hasattr(record, "paths") else np.asarray(record)
    if paths is None:
        raise ValueError("record holds no stored paths")
    truth = np.asarray(truth, dtype=float)
    if paths.shape[1] != truth.shape[0]:
        raise ValueError(f"truth has length {truth.shape[0]}, paths have length {paths.shape[1]}")
    if paths.shape[0] < n_blocks:
        raise ValueError(f"need at least {n_blocks} draws, got {paths.shape[0]}")
    rmse = np.array([
        math.sqrt(np.mean((blk.mean(axis=0) - truth) ** 2))
        for blk in np.array_split(paths, n_blocks)
    ])
    sd = float(rmse.std(ddof=1)) if n_blocks > 1 else 0.0
    return float(rmse.mean()), sd


def acceptance_curve(records: Sequence) -> np.ndarray:
    """Mean acceptance flag per record."""
    if len(records) == 0:
        raise ValueError("acceptance_curve needs at least one record")
    return np.array([
        float(np.mean(r.accept_flags if hasattr(r, "accept_flags") else r)) for r in records
    ])


def batch_means_se(series, n_batches: int = 50) -> float:
    """Monte Carlo standard error of a chain mean via batch means."""
    x = np.asarray(series, dtype=float)
    return math.sqrt(_batch_mean_var(x, n_batches))
