"""Recursive Bayesian Cramer-Rao lower bound for the latent log-abundance.

For scalar additive-Gaussian models the Fisher information obeys

    J_t = D22 - D12^2 / (J_{t-1} + D11),   J_0 = 1 / sigma_eps2

with D11 = E[f'(x_{t-1})^2] / sigma_eps2, D12 = -E[f'(x_{t-1})] / sigma_eps2 and
D22 = 1 / sigma_eps2 + 1 / sigma_w2.  Expectations are taken under the
weighted filtering cloud at t - 1; for t = 1 that cloud is the point x0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels
from .models import LOG_2PI, DomainError, ModelId, Params, transition_mean_derivative
from .particle_filter import FilterOutput, ParticleCloud, run_sir


@dataclass(frozen=True)
class FimTrace:
    J: np.ndarray
    bound: np.ndarray
    d_terms: np.ndarray  # (T, 3): d11, d12, d22


def fim_step(J_prev: float, d11: float, d12: float, d22: float) -> float:
    denom = J_prev + d11
    if not denom > 0:
        raise DomainError(f"information recursion needs J_prev + d11 > 0, got {denom}")
    return d22 - d12 * d12 / denom


def estimate_d_terms(model: ModelId, cloud: ParticleCloud, p: Params) -> tuple[float, float, float]:
    """Particle estimates of (D11, D12, D22) from one weighted cloud."""
    live = cloud.W > 0
    phi = transition_mean_derivative(model, cloud.x[live], p)
    W = cloud.W[live]
    q = p.sigma_eps2
    return (
        float(np.dot(W, phi * phi) / q),
        float(-np.dot(W, phi) / q),
        1.0 / q + 1.0 / p.sigma_w2,
    )


def filter_phi_moments(model: ModelId, out: FilterOutput, p: Params) -> np.ndarray:
    """(T, 2) array of E[f'] and E[f'^2] under the cloud preceding each step."""
    return _kernels.phi_moments(
        _kernels.MODEL_CODE[model.value], np.asarray(p.b, dtype=float), out.x0, out.x, out.W, out.T,
    )


def d_terms_from_moments(phi: np.ndarray, sigma_eps2: float, sigma_w2: float) -> np.ndarray:
    q = sigma_eps2
    d = np.empty((phi.shape[0], 3))
    d[:, 0] = phi[:, 1] / q
    d[:, 1] = -phi[:, 0] / q
    d[:, 2] = 1.0 / q + 1.0 / sigma_w2
    return d


def fim_recursion(d_terms: np.ndarray, J0: float) -> FimTrace:
    J = np.empty(d_terms.shape[0])
    prev = J0
    for t, (d11, d12, d22) in enumerate(d_terms):
        prev = fim_step(prev, d11, d12, d22)
        J[t] = prev
    return FimTrace(J, 1.0 / J, d_terms)


def fim_trace(model: ModelId, out: FilterOutput, p: Params) -> FimTrace:
    """Information sequence for one filter pass at fixed parameters."""
    d = d_terms_from_moments(filter_phi_moments(model, out, p), p.sigma_eps2, p.sigma_w2)
    return fim_recursion(d, 1.0 / p.sigma_eps2)


class BoundSummary(NamedTuple):
    avg_root_bound: float
    per_t_bounds: np.ndarray


def bcrlb_marginal(
    model: ModelId,
    y,
    record,
    cfg=None,
    *,
    root_after_average: bool = True,
    rng: Optional[np.random.Generator] = None,
    max_draws: Optional[int] = None,
) -> BoundSummary:
    """Average the per-draw bound over the posterior draws in ``record``.

    Uses the derivative moments stored with each draw; when the record has
    none, a filter is rerun at each stored theta (``cfg.L`` particles).
    With ``root_after_average`` the summary is
    sqrt(mean_{j,t} 1/J_t^(j)); otherwise mean_j sqrt(mean_t 1/J_t^(j)).
    """
    n = len(record)
    if n == 0:
        raise ValueError("bcrlb_marginal needs at least one draw")
    idx = np.arange(n)
    if max_draws is not None and n > max_draws:
        idx = np.linspace(0, n - 1, max_draws).round().astype(int)
    theta = record.theta[idx]
    k = len(model.coef_names)
    q = theta[:, k]
    r = theta[:, k + 1]

    if record.bcrlb_inputs is not None:
        phi = record.bcrlb_inputs[idx]
    else:
        if cfg is None:
            raise ValueError("record has no stored filter moments; pass cfg to regenerate them")
        from .rng import make_rng

        rng = rng if rng is not None else make_rng(cfg.seed)
        y = np.asarray(y, dtype=float)
        phi = np.empty((len(idx), len(y), 2))
        for m, j in enumerate(idx):
            p = Params.from_vector(model, theta[m])
            out = run_sir(model, p, y, cfg.L, 1.0, rng, cfg.resample_threshold)
            phi[m] = filter_phi_moments(model, out, p)

    T = phi.shape[1]
    Jt = 1.0 / q
    bounds = np.empty((len(idx), T))
    d22 = 1.0 / q + 1.0 / r
    for t in range(T):
        denom = Jt + phi[:, t, 1] / q
        if np.any(~(denom > 0)):
            raise DomainError(f"information recursion breaks down at t={t + 1}")
        Jt = d22 - (phi[:, t, 0] / q) ** 2 / denom
        bounds[:, t] = 1.0 / Jt

    per_t = bounds.mean(axis=0)
    if root_after_average:
        avg = math.sqrt(bounds.mean())
    else:
        avg = float(np.sqrt(bounds.mean(axis=1)).mean())
    return BoundSummary(avg, per_t)


class KalmanResult(NamedTuple):
    log_likelihood: float
    exact_J: np.ndarray
    means: np.ndarray
    variances: np.ndarray


def kalman_information_filter_M0(p: Params, y, x0_var: float = 0.0) -> KalmanResult:
    """Exact filter for the linear-Gaussian exponential-growth model.

    ``log_likelihood`` and the filtered moments condition on x0 ~ N(p.x0,
    x0_var) (a point mass by default, matching the particle filter).
    ``exact_J`` is the information recursion started at J_0 = 1/sigma_eps2,
    i.e. the exact bound sequence for this model.
    """
    if len(p.b) != 1:
        raise ValueError("kalman_information_filter_M0 needs exponential-growth parameters (b0 only)")
    y = np.asarray(y, dtype=float)
    q, r, b0 = p.sigma_eps2, p.sigma_w2, p.b[0]
    T = len(y)
    means = np.empty(T)
    variances = np.empty(T)
    J = np.empty(T)
    m, P = float(p.x0), float(x0_var)
    Jt = 1.0 / q
    ll = 0.0
    for t in range(T):
        m_pred = m + b0
        P_pred = P + q
        S = P_pred + r
        ll += -0.5 * (LOG_2PI + math.log(S)) - 0.5 * (y[t] - m_pred) ** 2 / S
        K = P_pred / S
        m = m_pred + K * (y[t] - m_pred)
        P = (1.0 - K) * P_pred
        means[t], variances[t] = m, P
        Jt = 1.0 / r + 1.0 / (q + 1.0 / Jt)
        J[t] = Jt
    return KalmanResult(float(ll), J, means, variances)
