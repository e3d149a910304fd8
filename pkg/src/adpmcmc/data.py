"""Series ingestion, synthetic data, run configuration and result files."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .models import DomainError, ModelId, Params, SKELETON, EXP_GUARD
from .sampler import ChainRecord, SamplerConfig

CONFIG_ENV = "ADPMCMC_CONFIG"


@dataclass
class TimeSeriesData:
    """Observed log-abundances ``y`` at strictly increasing integer times ``t``."""

    t: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 1 or len(self.y) == 0:
            raise ValueError("a series needs at least one observation")
        if self.t.shape != self.y.shape:
            raise ValueError("t and y must have the same length")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("time indices must be strictly increasing")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("observations must be finite")

    @property
    def T(self) -> int:
        return len(self.y)


@dataclass
class SyntheticTruth:
    model: ModelId
    x_true: np.ndarray
    y: np.ndarray
    theta_true: Params
    seed: Optional[int] = None

    def as_series(self) -> TimeSeriesData:
        return TimeSeriesData(np.arange(1, len(self.y) + 1), self.y.copy(),
                              {"source": f"simulated {self.model.value}", "transform": "none"})


def simulate_dataset(model, p: Params, T: int, rng: np.random.Generator,
                     seed: Optional[int] = None) -> SyntheticTruth:
    """Draw a latent path and observations; zero variances give the noiseless skeleton."""
    model = ModelId.parse(model)
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if p.sigma_eps2 < 0 or p.sigma_w2 < 0:
        raise ValueError("noise variances must be non-negative")
    f = SKELETON[model]
    sd_e, sd_w = math.sqrt(p.sigma_eps2), math.sqrt(p.sigma_w2)
    x = np.empty(T)
    y = np.empty(T)
    prev = float(p.x0)
    for t in range(T):
        if abs(prev) > EXP_GUARD:
            raise DomainError(f"simulation left the representable range at step {t}: x={prev:g}")
        with np.errstate(over="ignore", invalid="ignore"):
            mean = float(f(prev, p.b))
        if not math.isfinite(mean):
            raise DomainError(f"transition overflowed at step {t + 1} (x_prev={prev:g})")
        prev = mean + sd_e * rng.standard_normal()
        x[t] = prev
        y[t] = prev + sd_w * rng.standard_normal()
    return SyntheticTruth(model, x, y, p, seed)


def load_series(path, log_transform: bool = True) -> TimeSeriesData:
    """Read a two-column ``time,abundance`` CSV; a non-numeric first row is a header."""
    path = Path(path)
    t, v = [], []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns, found {len(row)}")
            try:
                ti, vi = float(row[0]), float(row[1])
            except ValueError:
                if lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: cannot parse {row!r}") from None
            if ti != int(ti):
                raise ValueError(f"{path}:{lineno}: time index {row[0]!r} is not an integer")
            if t and int(ti) <= t[-1]:
                raise ValueError(f"{path}:{lineno}: time {int(ti)} does not increase on {t[-1]}")
            if log_transform:
                if not vi > 0:
                    raise ValueError(f"{path}:{lineno}: abundance {vi:g} cannot be log-transformed")
                vi = math.log(vi)
            if not math.isfinite(vi):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            t.append(int(ti))
            v.append(vi)
    if not v:
        raise ValueError(f"{path}: no observations")
    return TimeSeriesData(np.array(t), np.array(v),
                          {"source": str(path), "transform": "log" if log_transform else "none"})


def write_series(data: TimeSeriesData, path) -> None:
    """Write ``t,y`` with round-trip float formatting (reload with ``log_transform=False``)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "y"])
        for ti, yi in zip(data.t, data.y):
            w.writerow([int(ti), repr(float(yi))])


# --- configuration ------------------------------------------------------------

@dataclass
class RunConfig:
    model: Optional[str] = None
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    log_transform: bool = True
    out_dir: Optional[str] = None


def load_config(path=None) -> RunConfig:
    """Read a JSON run configuration; ``$ADPMCMC_CONFIG`` replaces ``path`` when set."""
    path = os.environ.get(CONFIG_ENV) or path
    if path is None:
        return RunConfig()
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: configuration must be a JSON object")
    known = {"model", "sampler", "prior", "log_transform", "out_dir"}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"{path}: unknown configuration keys {sorted(unknown)}")
    sampler = dict(doc.get("sampler", {}))
    sampler.update(doc.get("prior", {}))
    return RunConfig(doc.get("model"), SamplerConfig.from_dict(sampler),
                     bool(doc.get("log_transform", True)), doc.get("out_dir"))


# --- result files ---------------------------------------------------------------

def save_record(record: ChainRecord, out_dir) -> None:
    """Write ``draws.csv`` (one row per draw) and ``chain.npz`` (everything, reloadable)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "draws.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(record.param_names) + ["accepted", "log_marginal"])
        for row, a, lm in zip(record.theta, record.accept_flags, record.log_marginals):
            w.writerow([repr(float(v)) for v in row] + [int(a), repr(float(lm))])
    arrays = {"theta": record.theta, "accept_flags": record.accept_flags,
              "log_marginals": record.log_marginals}
    for name in ("paths", "bcrlb_inputs", "warmup_theta"):
        if getattr(record, name) is not None:
            arrays[name] = getattr(record, name)
    np.savez_compressed(out / "chain.npz", model=record.model.value,
                        stage_acceptance=json.dumps(record.stage_acceptance), **arrays)


def load_record(out_dir) -> ChainRecord:
    with np.load(Path(out_dir) / "chain.npz") as z:
        get = lambda k: z[k] if k in z.files else None  # noqa: E731
        return ChainRecord(
            ModelId(str(z["model"])), z["theta"], z["accept_flags"], z["log_marginals"],
            get("paths"), get("bcrlb_inputs"), json.loads(str(z["stage_acceptance"])),
            get("warmup_theta"),
        )


def write_path_bands(record: ChainRecord, t, path, levels=(0.025, 0.975)) -> None:
    """Per-time posterior mean and credible band of the latent path."""
    if record.paths is None:
        raise ValueError("record holds no stored paths")
    q = np.quantile(record.paths, levels, axis=0)
    mean = record.paths.mean(axis=0)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mean", f"q{levels[0]:g}", f"q{levels[1]:g}"])
        for i, ti in enumerate(t):
            w.writerow([int(ti), repr(float(mean[i])), repr(float(q[0, i])), repr(float(q[1, i]))])


def write_json(obj, path) -> None:
    with Path(path).open("w") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")
