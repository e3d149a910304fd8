"""Population-growth state-space models on the log-abundance scale.

Every model has the form

    x_t = f(x_{t-1}; b) + eps_t,   eps_t ~ N(0, sigma_eps2)
    y_t = x_t + w_t,               w_t   ~ N(0, sigma_w2)

with ``x_t = log N_t``.  The deterministic skeletons are

    M0  f(x) = x + b0
    M1  f(x) = x + b0 + b1 e^x                      (Ricker)
    M2  f(x) = x + b0 + b2 e^{b3 x}                 (theta-logistic)
    M3  f(x) = 2x - log(b4 + e^x) + b0 + b1 e^x     (mate-limited Allee)
    M4  f(x) = x + b5 + b6 e^x + b7 e^{2x}          (flexible Allee)
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize, special

LOG_2PI = math.log(2.0 * math.pi)
EXP_GUARD = 700.0


class DomainError(ValueError):
    """Numeric domain violation (overflowing exponentials, invalid logs)."""


class ModelId(enum.Enum):
    M0 = "M0"
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"
    M4 = "M4"

    @property
    def coef_names(self) -> tuple[str, ...]:
        return _COEFS[self]

    @property
    def param_names(self) -> tuple[str, ...]:
        """Names of the full static vector: coefficients, both variances, x0."""
        return self.coef_names + ("sigma_eps2", "sigma_w2", "x0")

    @property
    def dim(self) -> int:
        """Coefficients plus the two noise variances (x0 excluded)."""
        return len(self.coef_names) + 2

    @classmethod
    def parse(cls, value: "ModelId | str") -> "ModelId":
        if isinstance(value, ModelId):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown model {value!r}; expected one of M0..M4") from None


_COEFS = {
    ModelId.M0: ("b0",),
    ModelId.M1: ("b0", "b1"),
    ModelId.M2: ("b0", "b2", "b3"),
    ModelId.M3: ("b0", "b1", "b4"),
    ModelId.M4: ("b5", "b6", "b7"),
}


@dataclass(frozen=True)
class Params:
    """Static parameters of one model.

    ``b`` holds the model coefficients in the order of ``ModelId.coef_names``.
    """

    b: tuple[float, ...]
    sigma_eps2: float
    sigma_w2: float
    x0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))

    def vector(self) -> np.ndarray:
        return np.array(self.b + (self.sigma_eps2, self.sigma_w2, self.x0), dtype=float)

    @classmethod
    def from_vector(cls, model: ModelId, v: Sequence[float]) -> "Params":
        k = len(model.coef_names)
        if len(v) != k + 3:
            raise ValueError(f"{model.value} expects {k + 3} values, got {len(v)}")
        return cls(tuple(v[:k]), float(v[k]), float(v[k + 1]), float(v[k + 2]))

    @classmethod
    def from_dict(cls, model: ModelId, d: dict) -> "Params":
        missing = [n for n in model.param_names if n not in d]
        if missing:
            raise ValueError(f"missing parameters for {model.value}: {missing}")
        return cls.from_vector(model, [float(d[n]) for n in model.param_names])

    def as_dict(self, model: ModelId) -> dict[str, float]:
        return dict(zip(model.param_names, self.vector().tolist()))

    def coef(self, model: ModelId, name: str) -> float:
        return self.b[model.coef_names.index(name)]


# Raw skeletons.  `b` is the coefficient tuple; x may be a scalar or an array.

def _f0(x, b):
    return x + b[0]


def _f1(x, b):
    return x + b[0] + b[1] * np.exp(x)


def _f2(x, b):
    return x + b[0] + b[1] * np.exp(b[2] * x)


def _f3(x, b):
    with np.errstate(divide="ignore"):
        log_b4 = np.log(b[2]) if b[2] > 0 else (-np.inf if b[2] == 0 else np.nan)
    return 2.0 * x - np.logaddexp(log_b4, x) + b[0] + b[1] * np.exp(x)


def _f4(x, b):
    n = np.exp(x)
    return x + b[0] + b[1] * n + b[2] * n * n


def _d0(x, b):
    return np.ones_like(np.asarray(x, dtype=float))


def _d1(x, b):
    return 1.0 + b[1] * np.exp(x)


def _d2(x, b):
    return 1.0 + b[1] * b[2] * np.exp(b[2] * x)


def _d3(x, b):
    n = np.exp(x)
    return 2.0 - n / (b[2] + n) + b[1] * n


def _d4(x, b):
    n = np.exp(x)
    return 1.0 + b[1] * n + 2.0 * b[2] * n * n


SKELETON: dict[ModelId, Callable] = {
    ModelId.M0: _f0, ModelId.M1: _f1, ModelId.M2: _f2, ModelId.M3: _f3, ModelId.M4: _f4,
}
SKELETON_DERIV: dict[ModelId, Callable] = {
    ModelId.M0: _d0, ModelId.M1: _d1, ModelId.M2: _d2, ModelId.M3: _d3, ModelId.M4: _d4,
}


def _guarded(kernel, model: ModelId, x_prev, p: Params, what: str):
    x = np.asarray(x_prev, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) > EXP_GUARD):
        raise DomainError(f"{model.value} {what}: state {x_prev!r} outside |x| <= {EXP_GUARD:g}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = kernel(x, p.b)
    if not np.all(np.isfinite(out)):
        raise DomainError(f"{model.value} {what}: non-finite result at x={x_prev!r}, b={p.b}")
    return float(out) if np.ndim(out) == 0 else out


def transition_mean(model: ModelId, x_prev, p: Params):
    """Deterministic log-scale mean of x_t given x_{t-1}."""
    return _guarded(SKELETON[model], model, x_prev, p, "transition_mean")


def transition_mean_derivative(model: ModelId, x_prev, p: Params):
    """d f / d x_{t-1}, evaluated analytically."""
    return _guarded(SKELETON_DERIV[model], model, x_prev, p, "transition_mean_derivative")


def _normal_logpdf(x, mean, var):
    return -0.5 * (LOG_2PI + np.log(var)) - 0.5 * (x - mean) ** 2 / var


def transition_logpdf(model: ModelId, x_prev, x, p: Params):
    if not p.sigma_eps2 > 0:
        raise ValueError(f"sigma_eps2 must be positive, got {p.sigma_eps2}")
    return _normal_logpdf(x, transition_mean(model, x_prev, p), p.sigma_eps2)


def observation_logpdf(y, x, sigma_w2: float):
    if not sigma_w2 > 0:
        raise ValueError(f"sigma_w2 must be positive, got {sigma_w2}")
    return _normal_logpdf(y, x, sigma_w2)


# --- priors -----------------------------------------------------------------

B4_SHAPE, B4_SCALE = 1.0, 10.0


@dataclass(frozen=True)
class Prior:
    """Prior for one model given a series length T.

    Coefficients are N(0, 1) except b4 ~ Gamma(1, scale=10); both variances
    are InvGamma(T/2, (T/2 - 1)/5); x0 is N(x0_mean, x0_var).
    """

    model: ModelId
    T: int
    x0_mean: float = 0.0
    x0_var: float = 1.0
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.T < 3:
            raise ValueError(f"prior needs T >= 3 so that the inverse-gamma shape exceeds 1, got {self.T}")
        unknown = set(self.fixed) - set(self.model.param_names)
        if unknown:
            raise ValueError(f"cannot fix unknown parameters {sorted(unknown)} for {self.model.value}")

    @property
    def ig_alpha(self) -> float:
        return self.T / 2.0

    @property
    def ig_beta(self) -> float:
        return 2.0 * (self.ig_alpha - 1.0) / 10.0

    def component_logpdf(self, name: str, v: float) -> float:
        if name == "b4":
            if not v > 0:
                return -np.inf
            return -math.log(B4_SCALE) - v / B4_SCALE
        if name in ("sigma_eps2", "sigma_w2"):
            if not v > 0:
                return -np.inf
            a, bb = self.ig_alpha, self.ig_beta
            return a * math.log(bb) - special.gammaln(a) - (a + 1.0) * math.log(v) - bb / v
        if name == "x0":
            return float(_normal_logpdf(v, self.x0_mean, self.x0_var))
        return -0.5 * LOG_2PI - 0.5 * v * v

    def logpdf(self, p: Params) -> float:
        """Sum of component log-densities over the free (non-fixed) parameters.

        Returns -inf outside the support rather than raising.
        """
        total = 0.0
        for name, v in zip(self.model.param_names, p.vector()):
            if name in self.fixed:
                continue
            if not math.isfinite(v):
                return -np.inf
            lp = self.component_logpdf(name, v)
            if lp == -np.inf:
                return -np.inf
            total += lp
        return float(total)

    def sample(self, rng: np.random.Generator) -> Params:
        vals = []
        for name in self.model.param_names:
            if name in self.fixed:
                vals.append(float(self.fixed[name]))
            elif name == "b4":
                vals.append(rng.gamma(B4_SHAPE, B4_SCALE))
            elif name in ("sigma_eps2", "sigma_w2"):
                vals.append(self.ig_beta / rng.gamma(self.ig_alpha, 1.0))
            elif name == "x0":
                vals.append(rng.normal(self.x0_mean, math.sqrt(self.x0_var)))
            else:
                vals.append(rng.standard_normal())
        return Params.from_vector(self.model, vals)


def prior_logpdf(model: ModelId, p: Params, T: int, **prior_kw) -> float:
    return Prior(model, T, **prior_kw).logpdf(p)


def prior_sample(model: ModelId, T: int, rng: np.random.Generator, **prior_kw) -> Params:
    return Prior(model, T, **prior_kw).sample(rng)


# --- equilibria -------------------------------------------------------------

class Classification(enum.Enum):
    NO_POSITIVE_EQUILIBRIUM = "NoPositiveEquilibrium"
    STABLE_K = "StableK"
    STRONG_ALLEE = "StrongAllee"
    WEAK_ALLEE = "WeakAllee"


@dataclass(frozen=True)
class Equilibria:
    carrying_capacity: Optional[float]
    allee_threshold: Optional[float]
    classification: Classification


_NONE = Equilibria(None, None, Classification.NO_POSITIVE_EQUILIBRIUM)


def _mate_limited_roots(b0: float, b1: float, b4: float) -> Equilibria:
    # Per-capita growth g(N) = log(N / (b4 + N)) + b0 + b1 N.  For b1 < 0 it is
    # unimodal with its peak where N (b4 + N) = -b4 / b1.
    if not (b4 > 0 and b1 < 0):
        return _NONE

    def g(n):
        return math.log(n) - math.log(b4 + n) + b0 + b1 * n

    with np.errstate(over="ignore"):
        peak = 0.5 * (-b4 + math.sqrt(b4 * b4 - 4.0 * b4 / b1))
    # Subnormal b1 puts the peak beyond double range; K is then reported as inf.
    peak = min(peak, 1e300)
    if g(peak) <= 0:
        return _NONE
    lo = peak
    while g(lo) > 0:
        lo *= 0.5
        if lo < 1e-300:
            return _NONE
    hi = peak
    while g(hi) > 0 and hi < 1e300:
        hi *= 2.0
    # Roots are found on the log scale, where the brackets stay short.
    h = lambda u: g(math.exp(u))  # noqa: E731
    tol = dict(xtol=1e-15, rtol=4 * np.finfo(float).eps)
    c = math.exp(optimize.brentq(h, math.log(lo), math.log(peak), **tol))
    if g(hi) > 0:
        return Equilibria(math.inf, c, Classification.STRONG_ALLEE)
    k = math.exp(optimize.brentq(h, math.log(peak), math.log(hi), **tol))
    return Equilibria(k, c, Classification.STRONG_ALLEE)


def equilibria(model: ModelId, p: Params) -> Equilibria:
    """Positive equilibria (natural scale) of the deterministic skeleton."""
    if model is ModelId.M0:
        return _NONE
    if model is ModelId.M1:
        b0, b1 = p.b
        if b0 > 0 and b1 < 0:
            return Equilibria(-b0 / b1, None, Classification.STABLE_K)
        return _NONE
    if model is ModelId.M2:
        b0, b2, b3 = p.b
        if b0 * b2 < 0 and b0 * b3 > 0:
            log_k = math.log(-b0 / b2) / b3
            k = math.exp(log_k) if log_k < 709.0 else math.inf
            return Equilibria(k, None, Classification.STABLE_K)
        return _NONE
    if model is ModelId.M3:
        b0, b1, b4 = p.b
        return _mate_limited_roots(b0, b1, b4)

    b5, b6, b7 = p.b
    if b7 == 0:
        if b5 > 0 and b6 < 0:
            return Equilibria(-b5 / b6, None, Classification.STABLE_K)
        return _NONE
    disc = b6 * b6 - 4.0 * b5 * b7
    if disc < 0:
        return _NONE
    root = math.sqrt(disc)
    k = (-b6 - root) / (2.0 * b7)
    c = (-b6 + root) / (2.0 * b7)
    if b7 < 0 and k > 0:
        if 0 < c < k:
            return Equilibria(k, c, Classification.STRONG_ALLEE)
        if c < 0:
            return Equilibria(k, c, Classification.WEAK_ALLEE)
    return Equilibria(k, c, Classification.NO_POSITIVE_EQUILIBRIUM)
