"""Simulation studies: path RMSE against the bound, acceptance versus L, Bayes factors.

Each driver is deterministic given ``seed``.  Datasets and chains draw from
independent streams spawned from one seed sequence, so changing the
chain settings never changes the data.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .bcrlb import bcrlb_marginal
from .data import simulate_dataset
from .diagnostics import blocked_rmse
from .evidence import EvidenceEstimate, PosteriorMixtureProposal, estimate_log_evidence, log_bf_table
from .models import ModelId, Params, Prior
from .rng import make_rng
from .sampler import SamplerConfig, run_chain

log = logging.getLogger(__name__)

ALL_MODELS = (ModelId.M0, ModelId.M1, ModelId.M2, ModelId.M3, ModelId.M4)


def theta_logistic_params() -> Params:
    """Theta-logistic truth used for the RMSE and acceptance studies (K = 6.19)."""
    return Params((0.15, -0.125, 0.1), 0.47 ** 2, 0.39 ** 2, math.log(1.27))


def flexible_allee_params(rng: np.random.Generator, T: int = 50, noise_scale: float = 1.0) -> Params:
    """Flexible-Allee truth (C = 1, K = 20); noise variances drawn from the prior, times ``noise_scale``."""
    prior = Prior(ModelId.M4, T)
    q = prior.ig_beta / rng.gamma(prior.ig_alpha)
    r = prior.ig_beta / rng.gamma(prior.ig_alpha)
    return Params((-0.05, 0.0525, -0.0025), noise_scale * q, noise_scale * r, math.log(2.0))


def _streams(seed: int, n: int) -> tuple[list[int], list[int]]:
    ss = np.random.SeedSequence(seed)
    data_ss, chain_ss = ss.spawn(2)
    to_int = lambda s: int(s.generate_state(1, np.uint64)[0])  # noqa: E731
    return [to_int(s) for s in data_ss.spawn(n)], [to_int(s) for s in chain_ss.spawn(n)]


@dataclass
class RmseRow:
    dataset: int
    rmse: float
    rmse_block_sd: float
    bcrlb: float
    acceptance: float


def rmse_study(n_datasets: int = 5, T: int = 50, cfg: Optional[SamplerConfig] = None,
               seed: int = 0, n_blocks: int = 20, model=ModelId.M2,
               truth: Optional[Params] = None) -> list[RmseRow]:
    """Blocked path RMSE and the averaged bound for fresh datasets."""
    model = ModelId.parse(model)
    cfg = cfg or SamplerConfig(L=500, n_sample=10000)
    truth = truth or theta_logistic_params()
    data_seeds, chain_seeds = _streams(seed, n_datasets)
    rows = []
    for i in range(n_datasets):
        sim = simulate_dataset(model, truth, T, make_rng(data_seeds[i]), data_seeds[i])
        c = dataclasses.replace(cfg, seed=chain_seeds[i], store_paths=True, collect_bcrlb=True)
        rec = run_chain(model, sim.y, c)
        m, sd = blocked_rmse(rec, sim.x_true, n_blocks)
        bound = bcrlb_marginal(model, sim.y, rec).avg_root_bound
        rows.append(RmseRow(i, m, sd, bound, rec.acceptance_rate))
        log.info("dataset %d: rmse %.3f (%.3f) bound %.3f", i, m, sd, bound)
    return rows


def acceptance_study(L_values: Sequence[int] = (20, 100, 500), n_seeds: int = 5, T: int = 50,
                     cfg: Optional[SamplerConfig] = None, seed: int = 0,
                     model=ModelId.M2, truth: Optional[Params] = None) -> np.ndarray:
    """Stage-3 acceptance rates, shape (n_seeds, len(L_values)); one dataset per seed."""
    model = ModelId.parse(model)
    cfg = cfg or SamplerConfig()
    truth = truth or theta_logistic_params()
    data_seeds, chain_seeds = _streams(seed, n_seeds)
    out = np.empty((n_seeds, len(L_values)))
    for i in range(n_seeds):
        y = simulate_dataset(model, truth, T, make_rng(data_seeds[i])).y
        for k, L in enumerate(L_values):
            c = dataclasses.replace(cfg, L=int(L), seed=chain_seeds[i], store_paths=False,
                                    collect_bcrlb=False)
            out[i, k] = run_chain(model, y, c).acceptance_rate
        log.info("seed %d: acceptance %s", i, np.round(out[i], 4))
    return out


def model_evidence(model, y, cfg: SamplerConfig, S: int, L: int, method: str = "posterior",
                   rng: Optional[np.random.Generator] = None) -> EvidenceEstimate:
    """Evidence for one model; ``posterior`` first runs a chain to build the proposal."""
    model = ModelId.parse(model)
    rng = rng if rng is not None else make_rng(cfg.seed)
    proposal = None
    if method == "posterior":
        c = dataclasses.replace(cfg, store_paths=False, collect_bcrlb=False)
        rec = run_chain(model, y, c, rng)
        proposal = PosteriorMixtureProposal(c.prior(model, len(y)), rec.theta)
    elif method != "prior":
        raise ValueError(f"unknown evidence method {method!r}")
    return estimate_log_evidence(model, y, S, L, cfg, rng, proposal)


@dataclass
class BayesFactorStudy:
    log_z: np.ndarray       # (n_datasets, n_models)
    std_error: np.ndarray
    models: tuple

    def log_bf(self, i: int) -> np.ndarray:
        """log BF table for dataset ``i``."""
        z = [EvidenceEstimate(a, b, 0, 0) for a, b in zip(self.log_z[i], self.std_error[i])]
        return log_bf_table(z)


def bayes_factor_study(n_datasets: int = 5, noise_scale: float = 1.0, T: int = 50,
                       S: int = 2000, L: int = 500, cfg: Optional[SamplerConfig] = None,
                       seed: int = 0, method: str = "posterior",
                       models: Sequence = ALL_MODELS) -> BayesFactorStudy:
    """Evidence for every model on flexible-Allee datasets."""
    models = tuple(ModelId.parse(m) for m in models)
    cfg = cfg or SamplerConfig(L=L)
    data_seeds, chain_seeds = _streams(seed, n_datasets)
    lz = np.empty((n_datasets, len(models)))
    se = np.empty_like(lz)
    for i in range(n_datasets):
        drng = make_rng(data_seeds[i])
        truth = flexible_allee_params(drng, T, noise_scale)
        y = simulate_dataset(ModelId.M4, truth, T, drng).y
        for k, m in enumerate(models):
            rng = make_rng(np.random.SeedSequence([chain_seeds[i], k]))
            est = model_evidence(m, y, cfg, S, L, method, rng)
            lz[i, k], se[i, k] = est.log_z, est.std_error
        log.info("dataset %d: log evidence %s", i, np.round(lz[i], 2))
    return BayesFactorStudy(lz, se, models)
