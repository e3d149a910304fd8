"""Command-line entry point: ``adpmcmc <command> ...``.

Exit status is 0 on success, 2 for bad arguments or inputs and 3 for
numeric domain errors (overflowing dynamics, broken information recursion).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import bench
from .bcrlb import bcrlb_marginal
from .data import (
    TimeSeriesData, load_config, load_record, load_series, save_record, simulate_dataset,
    write_json, write_path_bands, write_series,
)
from .diagnostics import acf, batch_means_se, blocked_rmse, geweke_z
from .evidence import EvidenceEstimate, bf_table, log_bf_table
from .models import DomainError, ModelId, Params
from .rng import make_rng
from .sampler import SamplerConfig, mmse, run_chain

EXIT_OK, EXIT_ARGS, EXIT_DOMAIN = 0, 2, 3

log = logging.getLogger("adpmcmc")


class ArgumentError(Exception):
    pass


def _sampler_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("sampler overrides")
    g.add_argument("--config", help="JSON run configuration (overridden by $ADPMCMC_CONFIG)")
    g.add_argument("--seed", type=int)
    g.add_argument("--L", type=int, dest="L", help="particles per filter")
    g.add_argument("--n-anneal", type=int)
    g.add_argument("--n-burn", type=int)
    g.add_argument("--n-sample", type=int)
    g.add_argument("--thin", type=int)


def _sampler_config(args) -> tuple[SamplerConfig, object]:
    run = load_config(args.config)
    over = {k: getattr(args, a) for k, a in
            [("seed", "seed"), ("L", "L"), ("n_anneal", "n_anneal"), ("n_burn", "n_burn"),
             ("n_sample", "n_sample"), ("thin", "thin")] if getattr(args, a, None) is not None}
    return dataclasses.replace(run.sampler, **over), run


def _read_data(path, log_transform: bool) -> TimeSeriesData:
    return load_series(path, log_transform=log_transform)


def _parse_params(model: ModelId, args) -> Params:
    if args.params_file:
        doc = json.loads(Path(args.params_file).read_text())
    elif args.params:
        doc = json.loads(args.params)
    else:
        raise ArgumentError("simulate needs --params or --params-file")
    return Params.from_dict(model, doc)


# --- commands -------------------------------------------------------------------

def cmd_simulate(args) -> int:
    model = ModelId.parse(args.model)
    p = _parse_params(model, args)
    sim = simulate_dataset(model, p, args.T, make_rng(args.seed), args.seed)
    write_series(sim.as_series(), args.out)
    if args.truth_out:
        write_json({"model": model.value, "seed": args.seed, "params": p.as_dict(model),
                    "x_true": sim.x_true}, args.truth_out)
    return EXIT_OK


def _summary(model: ModelId, record, y, truth=None) -> dict:
    theta, path = mmse(record)
    lo, hi = np.quantile(record.theta, [0.025, 0.975], axis=0)
    out = {
        "model": model.value,
        "n_draws": len(record),
        "mmse": theta.as_dict(model),
        "ci95": {n: [float(a), float(b)] for n, a, b in zip(model.param_names, lo, hi)},
        "acceptance": record.stage_acceptance,
    }
    if len(record) >= 40:
        out["geweke_z"] = {n: geweke_z(record.theta[:, i]) for i, n in enumerate(model.param_names)}
    if record.bcrlb_inputs is not None:
        b = bcrlb_marginal(model, y, record)
        out["bcrlb"] = {"avg_root_bound": b.avg_root_bound, "per_t": b.per_t_bounds}
    if truth is not None and record.paths is not None and len(record) >= 20:
        m, sd = blocked_rmse(record, truth)
        out["blocked_rmse"] = {"mean": m, "sd": sd}
    return out


def cmd_fit(args) -> int:
    cfg, run = _sampler_config(args)
    model = ModelId.parse(args.model or run.model or "")
    log_transform = run.log_transform if args.log_transform is None else args.log_transform
    data = _read_data(args.data, log_transform)
    out_dir = Path(args.out_dir or run.out_dir or "fit-out")
    truth = None
    if args.truth:
        truth = np.asarray(json.loads(Path(args.truth).read_text())["x_true"], dtype=float)
    record = run_chain(model, data.y, cfg)
    save_record(record, out_dir)
    summary = _summary(model, record, data.y, truth)
    summary.update(data=data.meta, config=cfg.to_dict())
    write_json(summary, out_dir / "summary.json")
    write_series(data, out_dir / "series.csv")
    if record.paths is not None:
        write_path_bands(record, data.t, out_dir / "path_bands.csv")
    print(f"{model.value}: {len(record)} draws, stage-3 acceptance "
          f"{record.stage_acceptance.get('Adaptive', float('nan')):.3f}; results in {out_dir}")
    return EXIT_OK


def cmd_evidence(args) -> int:
    cfg, run = _sampler_config(args)
    log_transform = run.log_transform if args.log_transform is None else args.log_transform
    data = _read_data(args.data, log_transform)
    L = args.L or cfg.L
    ests = []
    for k, m in enumerate(args.models):
        rng = make_rng(np.random.SeedSequence([cfg.seed, k]))
        e = bench.model_evidence(m, data.y, cfg, args.S, L, args.method, rng)
        ests.append(e)
        print(f"{e.model}: log Z = {e.log_z:.4f} (se {e.std_error:.4f})")
    write_json({"data": data.meta, "estimates": [e.to_dict() for e in ests]}, args.out)
    return EXIT_OK


def _load_estimates(paths) -> list[EvidenceEstimate]:
    ests = []
    for p in paths:
        doc = json.loads(Path(p).read_text())
        items = doc["estimates"] if isinstance(doc, dict) and "estimates" in doc else doc
        items = items if isinstance(items, list) else [items]
        ests.extend(EvidenceEstimate.from_dict(d) for d in items)
    return ests


def format_bf_table(names, bf: np.ndarray) -> str:
    """Bayes factors rounded to integers, row model over column model."""
    width = max(8, *(len(n) for n in names)) + 2
    lines = ["BF[row,col]".ljust(width) + "".join(n.rjust(width) for n in names)]
    for n, row in zip(names, bf):
        cells = [(f"{v:.0f}" if math.isfinite(v) else "inf").rjust(width) for v in row]
        lines.append(n.ljust(width) + "".join(cells))
    return "\n".join(lines)


def cmd_compare(args) -> int:
    ests = _load_estimates(args.evidence)
    if any(not math.isfinite(e.log_z) for e in ests):
        raise ArgumentError("every model needs a finite log evidence to compare")
    names = [e.model or f"model{i}" for i, e in enumerate(ests)]
    bf = bf_table(ests)
    print(format_bf_table(names, bf))
    if args.out:
        write_json({"models": names, "log_bf": log_bf_table(ests), "bf": bf}, args.out)
    return EXIT_OK


def cmd_bcrlb(args) -> int:
    record = load_record(args.fit_dir)
    y = load_series(Path(args.fit_dir) / "series.csv", log_transform=False).y
    b = bcrlb_marginal(record.model, y, record, root_after_average=not args.per_draw_root)
    report = {"model": record.model.value, "avg_root_bound": b.avg_root_bound, "per_t": b.per_t_bounds}
    print(f"average root bound: {b.avg_root_bound:.4f}")
    if args.out:
        write_json(report, args.out)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    record = load_record(args.fit_dir)
    max_lag = min(args.max_lag, len(record) - 1)
    report = {"model": record.model.value, "acceptance": record.stage_acceptance, "params": {}}
    for i, n in enumerate(record.param_names):
        s = record.theta[:, i]
        entry = {"mean": float(s.mean()), "mc_se": batch_means_se(s) if len(s) >= 100 else None,
                 "acf": acf(s, max_lag).tolist()}
        if len(s) >= 40:
            entry["geweke_z"] = geweke_z(s)
        report["params"][n] = entry
        print(f"{n:>12}: mean {entry['mean']: .4f}  geweke {entry.get('geweke_z', float('nan')): .2f}  "
              f"acf[1] {entry['acf'][1] if max_lag >= 1 else float('nan'): .3f}")
    if args.out:
        write_json(report, args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg, _ = _sampler_config(args)
    if args.study == "rmse":
        rows = bench.rmse_study(args.datasets, args.T, cfg, cfg.seed)
        for r in rows:
            print(f"dataset {r.dataset}: rmse {r.rmse:.3f} ({r.rmse_block_sd:.3f})  bound {r.bcrlb:.3f}")
        rm = np.array([r.rmse for r in rows])
        bd = np.array([r.bcrlb for r in rows])
        print(f"mean rmse {rm.mean():.3f} (sd across datasets {rm.std(ddof=1) if len(rm) > 1 else 0:.3f}); "
              f"mean bound {bd.mean():.3f}")
        result = [dataclasses.asdict(r) for r in rows]
    elif args.study == "acceptance":
        acc = bench.acceptance_study(args.L_values, args.datasets, args.T, cfg, cfg.seed)
        for L, a in zip(args.L_values, acc.mean(axis=0)):
            print(f"L={L}: mean stage-3 acceptance {a:.4f}")
        result = {"L": list(args.L_values), "acceptance": acc}
    else:
        st = bench.bayes_factor_study(args.datasets, args.noise_scale, args.T, args.S, cfg.L, cfg,
                                      cfg.seed, args.method)
        names = [m.value for m in st.models]
        for i in range(len(st.log_z)):
            print(f"dataset {i + 1}")
            with np.errstate(over="ignore"):  # overwhelming factors print as inf
                print(format_bf_table(names, np.exp(st.log_bf(i))))
        result = {"models": names, "log_z": st.log_z, "std_error": st.std_error}
    if args.out:
        write_json(result, args.out)
    return EXIT_OK


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adpmcmc", description="Adaptive particle MCMC for population SSMs")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a synthetic series")
    p.add_argument("--model", required=True)
    p.add_argument("--params", help="JSON object of parameter values")
    p.add_argument("--params-file")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV of t and log-scale y")
    p.add_argument("--truth-out", help="JSON with the latent path and parameters")
    p.set_defaults(func=cmd_simulate)

    def log_flags(q):
        g = q.add_mutually_exclusive_group()
        g.add_argument("--log-transform", dest="log_transform", action="store_true", default=None,
                       help="data are raw abundances; take logs (default from config, else on)")
        g.add_argument("--no-log-transform", dest="log_transform", action="store_false",
                       help="data are already on the log scale")

    p = sub.add_parser("fit", help="run the sampler on a series")
    p.add_argument("--data", required=True)
    p.add_argument("--model")
    p.add_argument("--out-dir")
    p.add_argument("--truth", help="truth JSON from simulate, for path RMSE")
    log_flags(p)
    _sampler_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evidence", help="estimate log evidence for several models")
    p.add_argument("--data", required=True)
    p.add_argument("--models", nargs="+", default=["M0", "M1", "M2", "M3", "M4"])
    p.add_argument("--S", type=int, default=10000, help="importance draws")
    p.add_argument("--method", choices=["prior", "posterior"], default="prior")
    p.add_argument("--out", required=True)
    log_flags(p)
    _sampler_args(p)
    p.set_defaults(func=cmd_evidence)

    p = sub.add_parser("compare", help="Bayes-factor table from evidence files")
    p.add_argument("evidence", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bcrlb", help="bound report for a fit directory")
    p.add_argument("fit_dir")
    p.add_argument("--per-draw-root", action="store_true",
                   help="average per-draw root bounds instead of rooting the averaged bound")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bcrlb)

    p = sub.add_parser("diagnose", help="Geweke, ACF and acceptance for a fit directory")
    p.add_argument("fit_dir")
    p.add_argument("--max-lag", type=int, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("bench", help="simulation studies at configurable scale")
    p.add_argument("study", choices=["rmse", "acceptance", "bayes-factors"])
    p.add_argument("--datasets", type=int, default=5)
    p.add_argument("--T", type=int, default=50)
    p.add_argument("--L-values", type=int, nargs="+", default=[20, 100, 500])
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.add_argument("--S", type=int, default=2000)
    p.add_argument("--method", choices=["prior", "posterior"], default="posterior")
    p.add_argument("--out")
    _sampler_args(p)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DomainError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ArgumentError, ValueError, KeyError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
