"""Model evidence by importance sampling with particle-filter likelihoods.

Each draw theta_s ~ q contributes p_hat(y | theta_s) p(theta_s) / q(theta_s);
because p_hat is unbiased, so is their average.  ``q`` defaults to the prior.
A heavy-tailed mixture fitted to posterior draws (with a defensive prior
component) is available through :class:`PosteriorMixtureProposal`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np
from scipy import special, stats

from .models import ModelId, Params, Prior
from .particle_filter import run_sir
from .rng import make_rng


@dataclass(frozen=True)
class EvidenceEstimate:
    log_z: float
    std_error: float
    n_prior_draws: int
    L: int
    model: Optional[str] = None
    method: str = "prior"
    underflow: bool = False

    def to_dict(self) -> dict:
        return {
            "model": self.model, "log_z": self.log_z, "std_error": self.std_error,
            "n_prior_draws": self.n_prior_draws, "L": self.L, "method": self.method,
            "underflow": self.underflow,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvidenceEstimate":
        return cls(float(d["log_z"]), float(d["std_error"]), int(d["n_prior_draws"]), int(d["L"]),
                   d.get("model"), d.get("method", "prior"), bool(d.get("underflow", False)))


class ImportanceProposal(Protocol):
    def sample(self, rng: np.random.Generator) -> Params: ...
    def logpdf(self, p: Params) -> float: ...


class PriorProposal:
    def __init__(self, prior: Prior):
        self.prior = prior

    def sample(self, rng):
        return self.prior.sample(rng)

    def logpdf(self, p):
        return self.prior.logpdf(p)


class PosteriorMixtureProposal:
    """Defensive mixture ``a * prior + (1 - a) * t_df(mean, c^2 cov)`` on free coordinates.

    Mean and covariance come from posterior draws (rows of full parameter
    vectors).  Fixed coordinates are copied from the prior's ``fixed`` map.
    """

    def __init__(self, prior: Prior, draws: np.ndarray, df: float = 4.0, inflate: float = 1.5,
                 prior_weight: float = 0.1):
        if not 0.0 < prior_weight <= 1.0:
            raise ValueError("prior_weight must lie in (0, 1]")
        self.prior = prior
        self.model = prior.model
        self.free = np.array([i for i, n in enumerate(self.model.param_names) if n not in prior.fixed])
        sub = np.asarray(draws, dtype=float)[:, self.free]
        if sub.shape[0] < 2:
            raise ValueError("need at least two posterior draws")
        mean = sub.mean(axis=0)
        cov = np.atleast_2d(np.cov(sub, rowvar=False)) * inflate ** 2
        # A stuck chain gives a singular covariance; floor each coordinate's variance.
        cov += np.diag(np.maximum(1e-6 * np.maximum(np.diag(cov), mean ** 2), 1e-10))
        self.t = stats.multivariate_t(loc=mean, shape=cov, df=df)
        self.prior_weight = prior_weight
        self._template = Params.from_vector(self.model, np.asarray(draws, dtype=float)[0]).vector()
        for i, n in enumerate(self.model.param_names):
            if n in prior.fixed:
                self._template[i] = prior.fixed[n]

    def sample(self, rng):
        if rng.random() < self.prior_weight:
            return self.prior.sample(rng)
        v = self._template.copy()
        v[self.free] = np.atleast_1d(self.t.rvs(random_state=rng))
        return Params.from_vector(self.model, v)

    def logpdf(self, p):
        v = p.vector()[self.free]
        lt = float(self.t.logpdf(v))
        lp = self.prior.logpdf(p)
        return float(np.logaddexp(math.log(self.prior_weight) + lp, math.log1p(-self.prior_weight) + lt)
                     if self.prior_weight < 1 else lp)


def estimate_log_evidence(
    model: ModelId,
    y,
    S: int,
    L: int,
    cfg=None,
    rng: Optional[np.random.Generator] = None,
    proposal: Optional[ImportanceProposal] = None,
) -> EvidenceEstimate:
    """Importance-sampling estimate of log p(y | model).

    ``std_error`` is the delta-method standard error on the log scale,
    sd(w) / (sqrt(S) mean(w)).
    """
    if S < 2:
        raise ValueError(f"need at least two importance draws, got {S}")
    model = ModelId.parse(model)
    y = np.asarray(y, dtype=float)
    method = "prior" if proposal is None else "posterior-mixture"
    if len(y) == 0:
        return EvidenceEstimate(0.0, 0.0, S, L, model.value, method)
    if rng is None:
        rng = make_rng(cfg.seed if cfg is not None else 0)
    if cfg is not None:
        prior = cfg.prior(model, max(len(y), 3))
        thr = cfg.resample_threshold
    else:
        prior = Prior(model, max(len(y), 3))
        thr = 0.8
    q = proposal if proposal is not None else PriorProposal(prior)

    lw = np.empty(S)
    for s in range(S):
        p = q.sample(rng)
        lp = prior.logpdf(p)
        if lp == -np.inf:
            lw[s] = -np.inf
            continue
        ll = run_sir(model, p, y, L, 1.0, rng, thr).log_marginal
        lw[s] = ll if proposal is None else ll + lp - q.logpdf(p)
    return _summarise(lw, S, L, model.value, method)


def _summarise(lw: np.ndarray, S: int, L: int, name: str, method: str) -> EvidenceEstimate:
    m = lw.max()
    if not np.isfinite(m):
        return EvidenceEstimate(-np.inf, float("inf"), S, L, name, method, underflow=True)
    w = np.exp(lw - m)
    log_z = float(m + math.log(w.mean()))
    se = float(w.std(ddof=1) / (math.sqrt(S) * w.mean()))
    return EvidenceEstimate(log_z, se, S, L, name, method)


def bayes_factor(z_i: EvidenceEstimate, z_j: EvidenceEstimate) -> float:
    if not (np.isfinite(z_i.log_z) and np.isfinite(z_j.log_z)):
        raise ValueError("Bayes factor needs two finite log-evidences")
    return math.exp(z_i.log_z - z_j.log_z)


def log_bf_table(estimates: Sequence[EvidenceEstimate]) -> np.ndarray:
    lz = np.array([e.log_z for e in estimates], dtype=float)
    return lz[:, None] - lz[None, :]


def bf_table(estimates: Sequence[EvidenceEstimate]) -> np.ndarray:
    """Matrix with entry (i, j) = BF_ij = p(y | M_i) / p(y | M_j)."""
    if len(estimates) < 2:
        raise ValueError("a Bayes-factor table needs at least two models")
    return np.exp(log_bf_table(estimates))
