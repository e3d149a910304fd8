"""Two-component Gaussian random-walk mixture with online covariance learning.

    q(theta -> .) = w1 N(theta, (2.38^2 / d) Sigma) + (1 - w1) N(theta, (0.1^2 / d) c I)

Sigma is the running empirical covariance of the chain; ``c`` is an optional
multiplier on the fixed component.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)
_singular_fallbacks = [0]


@dataclass(frozen=True)
class AdaptState:
    d: int
    n: int = 0
    mean: Optional[np.ndarray] = None
    m2: Optional[np.ndarray] = None
    w1: float = 0.95
    scale_adaptive: Optional[float] = None
    scale_fixed: Optional[float] = None
    fixed_scale_multiplier: float = 1.0

    def __post_init__(self):
        if self.mean is None:
            object.__setattr__(self, "mean", np.zeros(self.d))
        if self.m2 is None:
            object.__setattr__(self, "m2", np.zeros((self.d, self.d)))
        if self.scale_adaptive is None:
            object.__setattr__(self, "scale_adaptive", 2.38 ** 2 / self.d)
        if self.scale_fixed is None:
            object.__setattr__(self, "scale_fixed", 0.1 ** 2 / self.d)
        if not 0.0 <= self.w1 <= 1.0:
            raise ValueError(f"w1 must lie in [0, 1], got {self.w1}")

    @property
    def cov(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros((self.d, self.d))
        return self.m2 / (self.n - 1)

    @property
    def min_samples(self) -> int:
        """History length required before the adaptive component is used."""
        return 2 * self.d + 1

    @property
    def fixed_std(self) -> float:
        return math.sqrt(self.scale_fixed * self.fixed_scale_multiplier)


def update_covariance(s: AdaptState, theta_new) -> AdaptState:
    """Welford rank-one update of the running mean and (n-1)-normalised covariance."""
    x = np.asarray(theta_new, dtype=float)
    if x.shape != (s.d,):
        raise ValueError(f"expected a vector of length {s.d}, got shape {x.shape}")
    n = s.n + 1
    delta = x - s.mean
    mean = s.mean + delta / n
    m2 = s.m2 + np.outer(delta, x - mean)
    m2 = 0.5 * (m2 + m2.T)
    return replace(s, n=n, mean=mean, m2=m2)


def covariance_sqrt(cov: np.ndarray) -> Optional[np.ndarray]:
    """Symmetric square root of ``cov``; None when it cannot be formed."""
    d = cov.shape[0]
    tr = float(np.trace(cov))
    if not (np.all(np.isfinite(cov)) and tr > 0):
        return None
    vals, vecs = np.linalg.eigh(cov)
    if vals[0] < 0:
        cov = cov + 1e-10 * tr / d * np.eye(d)
        vals, vecs = np.linalg.eigh(cov)
        if vals[0] < 0:
            return None
    return (vecs * np.sqrt(vals)) @ vecs.T


def step(s: AdaptState, theta, z, adaptive: bool) -> np.ndarray:
    """Deterministic move ``theta + scale * z`` for a given standard-normal draw."""
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    if adaptive:
        root = covariance_sqrt(s.cov)
        if root is not None:
            return theta + math.sqrt(s.scale_adaptive) * (root @ z)
        _singular_fallbacks[0] += 1
        k = _singular_fallbacks[0]
        if k & (k - 1) == 0:  # log on the 1st, 2nd, 4th, 8th ... occurrence
            log.warning("adaptive covariance is singular (n=%d, %d fallbacks so far); using the fixed component",
                        s.n, k)
    return theta + s.fixed_std * z


def propose(s: AdaptState, theta, rng: np.random.Generator, allow_adaptive: bool = True) -> np.ndarray:
    """Draw from the mixture.

    The adaptive component is only eligible once ``s.n >= 2 d + 1``; every
    call consumes one uniform and ``d`` normals regardless of branch.
    """
    u = rng.random()
    z = rng.standard_normal(s.d)
    adaptive = allow_adaptive and s.n >= s.min_samples and u < s.w1
    return step(s, theta, z, adaptive)


def mixture_logpdf(s: AdaptState, theta_from, theta_to) -> float:
    """log q(theta_from -> theta_to) with both components active."""
    diff = np.asarray(theta_to, dtype=float) - np.asarray(theta_from, dtype=float)
    d = s.d
    var_f = s.scale_fixed * s.fixed_scale_multiplier
    log_fixed = -0.5 * (d * math.log(2 * math.pi * var_f) + diff @ diff / var_f)
    comps = [math.log1p(-s.w1) + log_fixed] if s.w1 < 1 else []
    if s.w1 > 0:
        cov = s.scale_adaptive * s.cov
        sign, logdet = np.linalg.slogdet(cov)
        if sign > 0:
            quad = diff @ np.linalg.solve(cov, diff)
            comps.append(math.log(s.w1) - 0.5 * (d * math.log(2 * math.pi) + logdet + quad))
    return float(np.logaddexp.reduce(comps))
