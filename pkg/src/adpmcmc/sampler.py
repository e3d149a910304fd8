"""Adaptive particle marginal Metropolis-Hastings over (theta, x_{1:T}).

A chain runs in three stages:

1. annealed: tempered target prior(theta) * p(y | theta)^gamma with gamma
   rising linearly from ``gamma_min`` to 1, fixed-component proposals only;
2. burn-in: gamma = 1, fixed-component proposals, every state feeds the
   running covariance;
3. adaptive: full mixture proposal, covariance keeps adapting, draws are
   recorded.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .models import ModelId, Params, Prior
from .particle_filter import FilterOutput, run_sir, sample_path
from .proposal import AdaptState, propose, update_covariance
from .rng import make_rng

log = logging.getLogger(__name__)


class Stage(enum.Enum):
    ANNEALED = "Annealed"
    NON_ADAPTIVE = "NonAdaptive"
    ADAPTIVE = "Adaptive"


@dataclass
class SamplerConfig:
    L: int = 500
    n_anneal: int = 5000
    n_burn: int = 5000
    n_sample: int = 50000
    seed: int = 0
    resample_threshold: float = 0.8
    w1: float = 0.95
    scale_adaptive: Optional[float] = None
    scale_fixed: Optional[float] = None
    fixed_scale_multiplier: float = 1.0
    gamma_min: float = 1e-5
    thin: int = 1
    store_paths: Optional[bool] = None
    collect_bcrlb: bool = True
    x0_mean: float = 0.0
    x0_var: float = 1.0
    fixed: dict = field(default_factory=dict)
    init: Optional[dict] = None

    def __post_init__(self):
        for name in ("n_anneal", "n_burn", "n_sample"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0.0 < self.gamma_min <= 1.0:
            raise ValueError("gamma_min must lie in (0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown sampler settings: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def prior(self, model: ModelId, T: int) -> Prior:
        return Prior(model, T, self.x0_mean, self.x0_var, dict(self.fixed))


@dataclass
class ChainState:
    theta: Params
    path: np.ndarray
    log_marginal: float
    log_prior: float
    stage: Stage
    gamma: float
    phi: Optional[np.ndarray] = None


@dataclass
class ChainRecord:
    """Stage-3 draws plus bookkeeping.

    ``theta`` rows are full parameter vectors in ``model.param_names`` order.
    ``bcrlb_inputs`` holds, per draw, the filter-weighted first and second
    moments of the skeleton derivative at each time step (shape J x T x 2).
    """

    model: ModelId
    theta: np.ndarray
    accept_flags: np.ndarray
    log_marginals: np.ndarray
    paths: Optional[np.ndarray] = None
    bcrlb_inputs: Optional[np.ndarray] = None
    stage_acceptance: dict = field(default_factory=dict)
    warmup_theta: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.theta.shape[0]

    @property
    def param_names(self) -> tuple[str, ...]:
        return self.model.param_names

    @property
    def acceptance_rate(self) -> float:
        return float(self.accept_flags.mean()) if len(self) else float("nan")

    def params(self, j: int) -> Params:
        return Params.from_vector(self.model, self.theta[j])

    def column(self, name: str) -> np.ndarray:
        return self.theta[:, self.param_names.index(name)]


def anneal_schedule(n: int, n_anneal: int, gamma_min: float = 1e-5) -> float:
    """Linear temper ladder: gamma(1) = gamma_min, gamma(n_anneal) = 1."""
    if not 1 <= n <= n_anneal:
        raise ValueError(f"iteration {n} outside 1..{n_anneal}")
    if n == n_anneal:
        return 1.0
    return gamma_min + (n - 1) * (1.0 - gamma_min) / (n_anneal - 1)


def _phi(model: ModelId, p: Params, out: FilterOutput) -> np.ndarray:
    return _kernels.phi_moments(
        _kernels.MODEL_CODE[model.value], np.asarray(p.b, dtype=float), out.x0,
        out.x, out.W, out.T,
    )


class _Chain:
    """Mutable per-chain context shared by the stage loops."""

    def __init__(self, model: ModelId, y, cfg: SamplerConfig, rng: np.random.Generator):
        self.model = model
        self.y = np.ascontiguousarray(y, dtype=float)
        self.cfg = cfg
        self.rng = rng
        self.prior = cfg.prior(model, len(self.y))
        self.free = np.array([i for i, n in enumerate(model.param_names) if n not in cfg.fixed], dtype=int)
        self.adapt = AdaptState(
            d=len(self.free), w1=cfg.w1, scale_adaptive=cfg.scale_adaptive,
            scale_fixed=cfg.scale_fixed, fixed_scale_multiplier=cfg.fixed_scale_multiplier,
        )

    def filter(self, p: Params, gamma: float) -> FilterOutput:
        return run_sir(self.model, p, self.y, self.cfg.L, gamma, self.rng, self.cfg.resample_threshold)

    def start(self, gamma: float, stage: Stage, max_tries: int = 1000) -> ChainState:
        for _ in range(max_tries):
            if self.cfg.init is not None:
                merged = {**self.cfg.init, **self.cfg.fixed}
                p = Params.from_dict(self.model, merged)
            else:
                p = self.prior.sample(self.rng)
            lp = self.prior.logpdf(p)
            out = self.filter(p, gamma)
            if np.isfinite(out.log_marginal) and np.isfinite(lp):
                return ChainState(p, sample_path(out, self.rng), out.log_marginal, lp, stage, gamma,
                                  _phi(self.model, p, out) if self.cfg.collect_bcrlb else None)
            if self.cfg.init is not None:
                raise ValueError("initial parameters give a zero likelihood estimate or prior density")
        raise RuntimeError(f"no finite-likelihood starting point after {max_tries} prior draws")

    def reweight(self, state: ChainState, gamma: float) -> ChainState:
        """New likelihood estimate for the current theta at temperature ``gamma`` (path kept)."""
        out = self.filter(state.theta, gamma)
        if not np.isfinite(out.log_marginal) and self.cfg.init is None:
            # Zero likelihood at the new temperature (e.g. explosive dynamics); a random walk
            # cannot leave such a plateau, so warm-up restarts from the prior.
            log.debug("zero likelihood estimate at gamma=%.4g; restarting from the prior", gamma)
            return self.start(gamma, state.stage)
        return dataclasses.replace(state, log_marginal=out.log_marginal, gamma=gamma)

    def refresh(self, state: ChainState, gamma: float, stage: Stage) -> ChainState:
        """Re-estimate the likelihood of the current theta at a new temperature."""
        out = self.filter(state.theta, gamma)
        if not np.isfinite(out.log_marginal):
            if self.cfg.init is None and not np.isfinite(state.log_marginal):
                return self.start(gamma, stage)
            return dataclasses.replace(state, stage=stage, gamma=gamma)
        phi = _phi(self.model, state.theta, out) if self.cfg.collect_bcrlb else None
        return ChainState(state.theta, sample_path(out, self.rng), out.log_marginal,
                          state.log_prior, stage, gamma, phi)


def pmmh_step(
    state: ChainState,
    cfg: SamplerConfig,
    adapt: AdaptState,
    model: ModelId,
    y,
    rng: np.random.Generator,
    *,
    prior: Optional[Prior] = None,
    gamma: Optional[float] = None,
    allow_adaptive: bool = True,
    collect_phi: bool = False,
) -> tuple[ChainState, bool]:
    """One PMMH iteration: propose theta', filter, accept or reject.

    The acceptance ratio is [p_hat'(y) prior(theta')] / [p_hat(y) prior(theta)]
    where p_hat for the current state is the estimate stored at its
    acceptance; the symmetric proposal cancels.
    """
    y = np.ascontiguousarray(y, dtype=float)
    prior = prior if prior is not None else cfg.prior(model, len(y))
    gamma = state.gamma if gamma is None else gamma
    free = np.array([i for i, n in enumerate(model.param_names) if n not in prior.fixed], dtype=int)

    v = state.theta.vector()
    v_new = v.copy()
    v_new[free] = propose(adapt, v[free], rng, allow_adaptive)
    p_new = Params.from_vector(model, v_new)
    lp_new = prior.logpdf(p_new)
    if lp_new == -np.inf:
        return dataclasses.replace(state, gamma=gamma), False

    out = run_sir(model, p_new, y, cfg.L, gamma, rng, cfg.resample_threshold)
    u = rng.random()
    if not np.isfinite(out.log_marginal):
        return dataclasses.replace(state, gamma=gamma), False
    log_ratio = (out.log_marginal + lp_new) - (state.log_marginal + state.log_prior)
    if u > 0.0 and math.log(u) >= log_ratio:
        return dataclasses.replace(state, gamma=gamma), False
    phi = _phi(model, p_new, out) if collect_phi else None
    new = ChainState(p_new, sample_path(out, rng), out.log_marginal, lp_new, state.stage, gamma, phi)
    return new, True


def run_chain(model: ModelId, y, cfg: SamplerConfig, rng: Optional[np.random.Generator] = None) -> ChainRecord:
    """Run the annealed / burn-in / adaptive schedule and return stage-3 draws."""
    model = ModelId.parse(model)
    y = np.ascontiguousarray(y, dtype=float)
    if y.ndim != 1 or len(y) == 0:
        raise ValueError("run_chain needs a non-empty 1-d series")
    rng = make_rng(cfg.seed) if rng is None else rng
    ch = _Chain(model, y, cfg, rng)
    T = len(y)
    store_paths = cfg.store_paths if cfg.store_paths is not None else (T <= 512 or cfg.thin > 1)
    collect = cfg.collect_bcrlb

    if cfg.n_anneal > 0:
        state = ch.start(anneal_schedule(1, cfg.n_anneal, cfg.gamma_min), Stage.ANNEALED)
    else:
        state = ch.start(1.0, Stage.NON_ADAPTIVE)

    warm = np.empty((cfg.n_anneal + cfg.n_burn, len(model.param_names)))
    counts = {}

    acc = 0
    for n in range(1, cfg.n_anneal + 1):
        gamma = anneal_schedule(n, cfg.n_anneal, cfg.gamma_min)
        if gamma != state.gamma:
            # The target moves every iteration; compare both states at the same temperature.
            state = ch.reweight(state, gamma)
        state, ok = pmmh_step(state, cfg, ch.adapt, model, y, rng, prior=ch.prior, gamma=gamma,
                              allow_adaptive=False)
        acc += ok
        warm[n - 1] = state.theta.vector()
    if cfg.n_anneal:
        counts[Stage.ANNEALED.value] = acc / cfg.n_anneal
        # The stored estimate belongs to the temperature at which it was accepted.
        state = ch.refresh(state, 1.0, Stage.NON_ADAPTIVE)
        log.info("stage 1 done: acceptance %.3f", counts[Stage.ANNEALED.value])

    state = dataclasses.replace(state, stage=Stage.NON_ADAPTIVE, gamma=1.0)
    acc = 0
    for n in range(cfg.n_burn):
        state, ok = pmmh_step(state, cfg, ch.adapt, model, y, rng, prior=ch.prior, gamma=1.0,
                              allow_adaptive=False, collect_phi=collect)
        acc += ok
        ch.adapt = update_covariance(ch.adapt, state.theta.vector()[ch.free])
        warm[cfg.n_anneal + n] = state.theta.vector()
    if cfg.n_burn:
        counts[Stage.NON_ADAPTIVE.value] = acc / cfg.n_burn
        log.info("stage 2 done: acceptance %.3f", counts[Stage.NON_ADAPTIVE.value])

    if collect and state.phi is None:
        state = ch.refresh(state, 1.0, Stage.ADAPTIVE)
    state = dataclasses.replace(state, stage=Stage.ADAPTIVE)

    J = cfg.n_sample // cfg.thin
    P = len(model.param_names)
    theta = np.empty((J, P))
    flags = np.zeros(J, dtype=bool)
    lms = np.empty(J)
    paths = np.empty((J, T)) if store_paths else None
    phis = np.empty((J, T, 2)) if collect else None
    acc = 0
    for n in range(cfg.n_sample):
        state, ok = pmmh_step(state, cfg, ch.adapt, model, y, rng, prior=ch.prior, gamma=1.0,
                              allow_adaptive=True, collect_phi=collect)
        acc += ok
        ch.adapt = update_covariance(ch.adapt, state.theta.vector()[ch.free])
        if (n + 1) % cfg.thin == 0:
            j = (n + 1) // cfg.thin - 1
            theta[j] = state.theta.vector()
            flags[j] = ok
            lms[j] = state.log_marginal
            if paths is not None:
                paths[j] = state.path
            if phis is not None:
                phis[j] = state.phi
    if cfg.n_sample:
        counts[Stage.ADAPTIVE.value] = acc / cfg.n_sample
        log.info("stage 3 done: acceptance %.3f", counts[Stage.ADAPTIVE.value])

    return ChainRecord(model, theta, flags, lms, paths, phis, counts, warm)


def mmse(record: ChainRecord) -> tuple[Params, Optional[np.ndarray]]:
    """Posterior means of theta and (if stored) of the latent path."""
    if len(record) == 0:
        raise ValueError("cannot form posterior means from an empty record")
    theta = Params.from_vector(record.model, record.theta.mean(axis=0))
    path = record.paths.mean(axis=0) if record.paths is not None else None
    return theta, path
