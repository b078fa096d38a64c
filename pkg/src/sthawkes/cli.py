"""Command-line entry point: simulate / fit / bench.

Every run writes a JSON manifest capturing the resolved configuration,
seeds and outputs, so it can be reproduced exactly.  Exit codes: 0 on
success, 2 for usage or validation problems, 1 for internal errors.
The HAWKES_SEED environment variable overrides any default seed; explicit
seed flags still win.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .bayes import BayesConfig, SpatialBanding, TemporalBinning, fit_bayes
from .bench import (
    builtin_scenarios,
    run_scenario,
    scenario_by_id,
    scenario_summary,
    write_metrics_csv,
    write_raw_csv,
)
from .em import EmConfig, fit_em
from .io import (
    fit_result_to_dict,
    posterior_summary_to_dict,
    read_events_csv,
    read_model_json,
    write_events_csv,
)
from .likelihood import GridSpec, MleConfig, fit_mle
from .model import Window
from .simulate import BOUNDARIES, METHODS, SimConfig, simulate

_TEMPORAL_ALIASES = {"exp": "exponential", "exponential": "exponential", "pl": "powerlaw", "powerlaw": "powerlaw"}
_SPATIAL_ALIASES = {"gauss": "gaussian", "gaussian": "gaussian", "exp": "exponential", "exponential": "exponential"}


class UsageError(Exception):
    """Bad flags or invalid inputs: reported on stderr, exit code 2."""


def _resolve_seed(value, default: int) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("HAWKES_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"HAWKES_SEED must be an integer, got {env!r}") from None
    return default


def _parse_window(values) -> Window:
    try:
        return Window(*values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid window: {exc}") from None


def _write_manifest(path: Path, payload: dict) -> None:
    """Write atomically so a crash never leaves a half manifest behind."""
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, default=str)
        fh.write("\n")
    os.replace(tmp, path)


def _manifest_base(subcommand: str, config: dict) -> dict:
    return {
        "subcommand": subcommand,
        "version": __version__,
        "config": config,
        "started": datetime.now(timezone.utc).isoformat(),
    }


def _clean_config(args: argparse.Namespace) -> dict:
    skip = {"func"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def cmd_simulate(args) -> int:
    if (args.model is None) == (args.scenario is None):
        raise UsageError("provide exactly one of --model or --scenario")
    if args.model is not None:
        try:
            model, window = read_model_json(args.model)
        except FileNotFoundError:
            raise UsageError(f"model file not found: {args.model}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"invalid model JSON: {exc}") from None
        method = args.method or "parents-offspring"
    else:
        try:
            scenario = scenario_by_id(args.scenario)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
        model, window = scenario.model, scenario.window
        method = args.method or scenario.sim_method
    if args.window is not None:
        window = _parse_window(args.window)

    seed = _resolve_seed(args.seed, 0)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    manifest = _manifest_base("simulate", _clean_config(args))
    manifest["seeds"] = list(range(seed, seed + args.reps))
    outputs = []
    runs = []
    for i in range(args.reps):
        cfg = SimConfig(seed=seed + i, method=method, boundary=args.boundary)
        try:
            result = simulate(model, window, cfg)
        except ValueError as exc:  # e.g. a window override the background cannot cover
            raise UsageError(str(exc)) from None
        name = f"pattern_{i:03d}.csv"
        write_events_csv(outdir / name, result.events)
        outputs.append(name)
        runs.append(
            {
                "seed": seed + i,
                "count": len(result.events),
                "seconds": result.seconds,
                "warnings": list(result.warnings),
            }
        )
    manifest["runs"] = runs
    manifest["outputs"] = outputs
    manifest["finished"] = datetime.now(timezone.utc).isoformat()
    _write_manifest(outdir / "manifest.json", manifest)
    print(f"wrote {args.reps} pattern(s) to {outdir}")
    return 0


def cmd_fit(args) -> int:
    try:
        data = read_events_csv(args.input)
    except FileNotFoundError:
        raise UsageError(f"input file not found: {args.input}") from None
    except ValueError as exc:
        raise UsageError(f"malformed CSV: {exc}") from None
    window = _parse_window(args.window)
    temporal_kind = _TEMPORAL_ALIASES[args.temporal]
    spatial_kind = _SPATIAL_ALIASES[args.spatial]

    out = Path(args.out)
    manifest = _manifest_base("fit", _clean_config(args))
    outputs = [out.name]

    try:
        if args.method == "mle":
            cfg = MleConfig(grid=GridSpec(*args.grid), max_evals=args.max_evals, tol=args.tol)
            result = fit_mle(data, window, temporal_kind, spatial_kind, cfg)
            payload = fit_result_to_dict(result)
        elif args.method == "em":
            cfg = EmConfig(max_iters=args.max_iters, tol=args.tol)
            result = fit_em(data, window, temporal_kind, spatial_kind, cfg)
            payload = fit_result_to_dict(result)
            if args.trace:
                with open(args.trace, "w", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(("iteration", "mu", "k", "temporal_param", "spatial_param"))
                    for it, params in enumerate(result.trace or []):
                        writer.writerow((it,) + tuple(format(v, ".10g") for v in params.as_array()))
                outputs.append(Path(args.trace).name)
        else:
            cfg = BayesConfig(
                max_evals=args.max_evals,
                tol=args.tol,
                mcmc=args.mcmc,
                draws=args.draws,
                burn_in=args.burn_in,
                mcmc_seed=_resolve_seed(args.mcmc_seed, 0),
            )
            binning = TemporalBinning(args.first_width, args.bin_growth, args.max_bins)
            banding = SpatialBanding(
                args.first_radius, args.band_growth, args.max_bands, args.mc_points, args.weight_seed
            )
            summary = fit_bayes(
                data,
                window,
                temporal_kind,
                spatial_kind,
                binning=binning,
                banding=banding,
                config=cfg,
            )
            payload = posterior_summary_to_dict(summary)
            if args.samples and summary.samples is not None:
                with open(args.samples, "w", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(("mu", "k", "temporal_param", "spatial_param"))
                    for row in summary.samples:
                        writer.writerow(tuple(format(v, ".10g") for v in row))
                outputs.append(Path(args.samples).name)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    with open(out, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    manifest["outputs"] = outputs
    manifest["finished"] = datetime.now(timezone.utc).isoformat()
    _write_manifest(out.with_name(out.name + ".manifest.json"), manifest)
    print(f"wrote {out}")
    return 0


def cmd_bench(args) -> int:
    try:
        scenario = scenario_by_id(args.scenario)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip()) if args.methods else scenario.fit_methods
    for m in methods:
        if m not in ("mle", "em", "bayes"):
            raise UsageError(f"unknown fit method {m!r}; choose from mle, em, bayes")
    scenario = dataclasses.replace(
        scenario,
        reps=args.reps or scenario.reps,
        fit_methods=methods,
        seed_base=_resolve_seed(args.seed, scenario.seed_base),
    )
    parallelism = args.parallelism or os.cpu_count() or 1

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = _manifest_base("bench", _clean_config(args))
    manifest["scenario"] = scenario_summary(scenario)
    manifest["parallelism"] = parallelism

    t0 = time.perf_counter()
    table = run_scenario(scenario, parallelism)
    write_metrics_csv(outdir / "metrics.csv", table)
    write_raw_csv(outdir / "raw.csv", table)
    manifest["seconds"] = time.perf_counter() - t0
    manifest["mean_count"] = table.mean_count
    manifest["failures"] = {m: mm.failures for m, mm in table.methods.items()}
    manifest["outputs"] = ["metrics.csv", "raw.csv"]
    manifest["finished"] = datetime.now(timezone.utc).isoformat()
    _write_manifest(outdir / "manifest.json", manifest)
    print(f"wrote metrics for scenario {scenario.id} to {outdir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sthawkes", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate seeded realizations")
    sim.add_argument("--model", help="model descriptor JSON path")
    sim.add_argument("--scenario", help="built-in scenario id (see bench --help)")
    sim.add_argument("--method", choices=METHODS, default=None)
    sim.add_argument("--boundary", choices=BOUNDARIES, default="reflect")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--reps", type=int, default=1)
    sim.add_argument("--window", type=float, nargs=6, metavar=("XMIN", "XMAX", "YMIN", "YMAX", "TMIN", "TMAX"))
    sim.add_argument("--out", default=".", help="output directory")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit a pattern CSV")
    fit.add_argument("--method", choices=("mle", "em", "bayes"), required=True)
    fit.add_argument("--input", required=True, help="event CSV with x,y,t header")
    fit.add_argument("--window", type=float, nargs=6, required=True,
                     metavar=("XMIN", "XMAX", "YMIN", "YMAX", "TMIN", "TMAX"))
    fit.add_argument("--temporal", choices=sorted(_TEMPORAL_ALIASES), default="exp")
    fit.add_argument("--spatial", choices=sorted(_SPATIAL_ALIASES), default="gauss")
    fit.add_argument("--out", default="fit.json")
    fit.add_argument("--tol", type=float, default=1e-6)
    fit.add_argument("--max-evals", type=int, default=2000)
    fit.add_argument("--grid", type=int, nargs=3, default=(25, 25, 25), metavar=("NX", "NY", "NT"))
    fit.add_argument("--max-iters", type=int, default=200, help="EM iteration cap")
    fit.add_argument("--trace", help="EM per-iteration parameter CSV path")
    fit.add_argument("--mcmc", action="store_true", help="run random-walk Metropolis after MAP")
    fit.add_argument("--draws", type=int, default=5000)
    fit.add_argument("--burn-in", type=int, default=1000)
    fit.add_argument("--mcmc-seed", type=int, default=None)
    fit.add_argument("--samples", help="posterior sample CSV path (with --mcmc)")
    fit.add_argument("--first-width", type=float, default=0.5, help="first temporal bin width")
    fit.add_argument("--bin-growth", type=float, default=1.0)
    fit.add_argument("--max-bins", type=int, default=10)
    fit.add_argument("--first-radius", type=float, default=0.05, help="first spatial band radius")
    fit.add_argument("--band-growth", type=float, default=0.5)
    fit.add_argument("--max-bands", type=int, default=10)
    fit.add_argument("--mc-points", type=int, default=10000)
    fit.add_argument("--weight-seed", type=int, default=0)
    fit.set_defaults(func=cmd_fit)

    bench = sub.add_parser("bench", help="run a replication study")
    bench.add_argument("--scenario", required=True,
                       help="one of: " + ", ".join(sc.id for sc in builtin_scenarios()))
    bench.add_argument("--reps", type=int, default=None)
    bench.add_argument("--methods", default=None, help="comma list from mle,em,bayes")
    bench.add_argument("--seed", type=int, default=None, help="seed base")
    bench.add_argument("--parallelism", type=int, default=None)
    bench.add_argument("--out", default=".", help="output directory")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # anything unexpected is an internal error
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
