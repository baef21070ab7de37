"""Command-line front end.

    compoundrisk validate  CONFIG
    compoundrisk simulate  CONFIG [--workers N] [--periods N] [--output DIR]
    compoundrisk scaling   CONFIG ...
    compoundrisk harden    CONFIG ...
    compoundrisk calibrate CONFIG ...
    compoundrisk fixtures  DIR [--seed S] [--scale X]
    compoundrisk emit-plot-data TABLE.csv [--id COL ...]

CONFIG may be a path or the name of a bundled config ("historical",
"future"). Exit status is 0 on success, 3 for invalid inputs and 4 for
failures while running.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .calibrate import CalibrationWarning, EventEvaluator, calibrate, load_targets
from .catalog import StormCatalog, load_catalog
from .config import ConfigError, RunConfig, bundled_config, config_from_dict
from .damage import FragilitySet, load_fragility
from .grid import NetworkError, PowerNetwork, load_network, validate_network
from .harden import dump_plan, evaluate_strategies
from .heat import DEFAULT_ANOMALY, HeatClimatology, load_anomaly_table, load_climatology
from .recovery import RepairResources, load_resources
from .risk import EnsembleResult, RiskModel, SimulationSettings, run_ensemble
from .scaling import curve_rows, pooled_curve
from .stats import (exceedance_stats, exceedance_table, heatwave_probability_curve, length_risk_correlation,
                    tract_risk_map)
from .tables import long_form, read_csv, write_csv, write_json, write_table
from .windfield import load_study_grid

EXIT_OK = 0
EXIT_INVALID = 3
EXIT_RUNTIME = 4
ENV_OUTPUT = "COMPOUNDRISK_OUTPUT_DIR"
RISK_DAYS = range(0, 31)


class InputError(Exception):
    """Input files failed to load; carries machine-readable diagnostics."""

    def __init__(self, diagnostics):
        super().__init__("; ".join(f"{d['input']}: {d['error']}" for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass
class Inputs:
    network: PowerNetwork
    catalog: StormCatalog
    climatology: HeatClimatology
    fragility: FragilitySet
    resources: RepairResources
    grid_points: np.ndarray | None = None
    anomaly: tuple = DEFAULT_ANOMALY
    baseline_catalog: StormCatalog | None = None
    baseline_climatology: HeatClimatology | None = None


# -- config and inputs -------------------------------------------------------

def resolve_config(arg, overrides=None) -> RunConfig:
    path = Path(arg)
    if not path.exists() and not path.suffix:
        path = bundled_config(arg)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_dict(raw, path.parent, str(path))


def _diag(key, path, exc):
    msg = str(exc)
    if isinstance(exc, FileNotFoundError) or (isinstance(exc, OSError) and not Path(path).exists()):
        msg = f"file not found: {path}"
    d = {"input": key, "file": str(path), "error": msg}
    if isinstance(exc, NetworkError) and len(exc.args) > 1:
        d["details"] = list(exc.args[1])
    return d


def load_inputs(cfg: RunConfig) -> Inputs:
    """Run every loader; raise InputError listing all failures at once."""
    diags, got = [], {}
    loaders = {
        "network": load_network,
        "catalog": load_catalog,
        "climatology": lambda p: load_climatology(p, cfg.bias_correct),
        "fragility": load_fragility,
        "resources": load_resources,
        "study_grid": lambda p: load_study_grid(p)[1],
        "anomaly_table": lambda p: tuple(load_anomaly_table(p)),
        "baseline_catalog": load_catalog,
        "baseline_climatology": lambda p: load_climatology(p, cfg.bias_correct),
    }
    for key, fn in loaders.items():
        path = getattr(cfg, key)
        if path is None:
            continue
        if not Path(path).is_file():
            diags.append({"input": key, "file": str(path), "error": f"file not found: {path}"})
            continue
        try:
            got[key] = fn(path)
        except Exception as exc:     # every loader error becomes a diagnostic
            diags.append(_diag(key, path, exc))
    if "network" in got:
        problems = validate_network(got["network"])
        if problems:
            diags.append({"input": "network", "file": str(cfg.network), "error": "invalid network",
                          "details": problems})
    if cfg.calibrate.targets is not None:
        try:
            load_targets(cfg.calibrate.targets)
        except Exception as exc:
            diags.append(_diag("targets", cfg.calibrate.targets, exc))
    if diags:
        raise InputError(diags)
    cat = got["catalog"]
    if cfg.frequency_override:
        cat = replace(cat, annual_frequency=got["baseline_catalog"].annual_frequency)
    return Inputs(got["network"], cat, got["climatology"], got["fragility"], got["resources"],
                  got.get("study_grid"), got.get("anomaly_table", DEFAULT_ANOMALY),
                  got.get("baseline_catalog"), got.get("baseline_climatology"))


def settings_for(cfg: RunConfig, inputs: Inputs, collect_impacts=False) -> SimulationSettings:
    return SimulationSettings(period_years=cfg.period_years, outage_threshold_days=cfg.outage_days,
                              hi_threshold=cfg.hi_threshold, window_days=cfg.window_days,
                              capacity_multiplier=cfg.capacity_multiplier, composite_adjust=cfg.composite_adjust,
                              anomaly=tuple(float(a) for a in inputs.anomaly), wind=cfg.wind,
                              collect_impacts=collect_impacts)


def build_model(cfg: RunConfig, inputs: Inputs, baseline=False, collect_impacts=False) -> RiskModel:
    cat = inputs.baseline_catalog if baseline else inputs.catalog
    clim = inputs.baseline_climatology if baseline else inputs.climatology
    return RiskModel(inputs.network, cat, clim, inputs.fragility, inputs.resources, inputs.grid_points,
                     settings_for(cfg, inputs, collect_impacts))


def output_dir(cfg: RunConfig | None, flag=None, command="run") -> Path:
    if flag:
        out = Path(flag)
    elif os.environ.get(ENV_OUTPUT):
        out = Path(os.environ[ENV_OUTPUT])
    elif cfg is not None and cfg.output_dir is not None:
        out = cfg.output_dir
    else:
        out = Path.cwd() / "compoundrisk-out" / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(outdir, cfg: RunConfig | None, command, written, extra=None) -> Path:
    """Seeds, config hash and output hashes; nothing that varies between identical reruns."""
    files = {}
    for p in sorted(set(Path(w) for w in written), key=lambda p: str(p)):
        files[str(p.relative_to(outdir))] = hashlib.sha256(p.read_bytes()).hexdigest()
    m = {"command": command, "version": __version__, "outputs": files}
    if cfg is not None:
        m.update({"config": cfg.source.name, "config_sha256": cfg.digest(), "seed": cfg.seed,
                  "n_periods": cfg.n_periods, "period_years": cfg.period_years,
                  "inputs": {k: Path(p).name for k, p in sorted(cfg.input_paths().items())}})
    m.update(extra or {})
    return write_json(Path(outdir) / "manifest.json", m)


# -- summaries ---------------------------------------------------------------

def full_restoration_p90(ensemble: EnsembleResult) -> float:
    """90th percentile (days) of full-restoration time over events with customers out past the threshold."""
    h = [e.full_restoration_h for e in ensemble.events if e.outage_fraction > 0]
    return float(np.quantile(h, 0.9) / 24.0) if h else 0.0


def period_rows(ensemble: EnsembleResult, d) -> list[dict]:
    w = ensemble.customers.astype(float)
    tot = w.sum()
    rows = []
    for k, p in enumerate(ensemble.periods):
        rows.append({"period": k, "n_events": len(p.events),
                     "n_damaging": sum(1 for e in p.events if e.n_failed),
                     "max_full_restoration_h": max([e.full_restoration_h for e in p.events] + [0.0]),
                     "max_heatwave_days": max([e.heatwave_days for e in p.events] + [0]),
                     "outage_fraction": float((p.outage_days > d) @ w / tot),
                     "compound_fraction": float((p.compound_days > d) @ w / tot)})
    return rows


def event_rows(ensemble: EnsembleResult) -> list[dict]:
    return [{"period": k, "year": e.year, "day": e.day, "storm": e.storm_id, "n_failed": e.n_failed,
             "full_restoration_h": e.full_restoration_h, "outage_fraction": e.outage_fraction,
             "heatwave_days": e.heatwave_days}
            for k, p in enumerate(ensemble.periods) for e in p.events]


def ensemble_summary(ensemble: EnsembleResult, d) -> dict:
    e = exceedance_stats(ensemble, d)
    hw = [ev.heatwave_days for ev in ensemble.events]
    return {"d": d, "n_periods": len(ensemble.periods), "n_events": len(hw),
            "n_damaging_events": sum(1 for ev in ensemble.events if ev.n_failed),
            "outage": e.outage.as_dict(), "compound": e.compound.as_dict(),
            "heatwave_probability": float(np.mean(np.asarray(hw) > d)) if hw else 0.0,
            "full_restoration_p90_days": full_restoration_p90(ensemble)}


def relative_risk_rows(hist: EnsembleResult, fut: EnsembleResult, floor=None) -> tuple[list, float]:
    curve = heatwave_probability_curve(hist, fut, floor, RISK_DAYS)
    rows = []
    for k, d in enumerate(curve.d):
        eh, ef = exceedance_stats(hist, int(d)), exceedance_stats(fut, int(d))
        row = {"d": int(d), "heatwave_future": curve.future[k], "heatwave_historical": curve.historical[k],
               "heatwave_ratio": curve.ratio[k]}
        for name, h, f in (("outage", eh.outage.mean, ef.outage.mean),
                           ("compound", eh.compound.mean, ef.compound.mean)):
            hf = max(h, curve.floor)
            row.update({f"{name}_future": f, f"{name}_historical": hf, f"{name}_ratio": f / hf})
        rows.append(row)
    return rows, curve.floor


# -- commands ----------------------------------------------------------------

def cmd_validate(cfg: RunConfig) -> dict:
    errors = []
    try:
        load_inputs(cfg)
    except InputError as e:
        errors = e.diagnostics
    return {"config": str(cfg.source), "ok": not errors, "errors": errors}


def cmd_simulate(cfg: RunConfig, outdir, workers=None) -> dict:
    inputs = load_inputs(cfg)
    workers = workers or cfg.workers
    d = cfg.outage_days
    ens = run_ensemble(build_model(cfg, inputs), cfg.n_periods, cfg.seed, workers)
    written = []
    written += write_table(outdir, "exceedance", exceedance_table(ens, RISK_DAYS))
    written += write_table(outdir, "tract_map", tract_risk_map(ens, d))
    written.append(write_csv(Path(outdir) / "periods.csv", period_rows(ens, d)))
    written.append(write_csv(Path(outdir) / "events.csv", event_rows(ens)))
    summary = {"primary": ensemble_summary(ens, d)}
    if inputs.baseline_catalog is not None and inputs.baseline_climatology is not None:
        base = run_ensemble(build_model(cfg, inputs, baseline=True), cfg.n_periods, cfg.seed, workers)
        written += write_table(outdir, "exceedance_baseline", exceedance_table(base, RISK_DAYS))
        rows, floor = relative_risk_rows(base, ens, cfg.floor)
        written += write_table(outdir, "relative_risk", rows)
        summary["baseline"] = ensemble_summary(base, d)
        summary["relative_risk_floor"] = floor
        summary["ratios"] = {k: rows[d][f"{k}_ratio"] for k in ("outage", "heatwave", "compound")}
    written.append(write_json(Path(outdir) / "summary.json", summary))
    write_manifest(outdir, cfg, "simulate", written)
    return summary


def cmd_scaling(cfg: RunConfig, outdir, workers=None) -> dict:
    inputs = load_inputs(cfg)
    n = cfg.scaling_periods or cfg.n_periods
    ens = run_ensemble(build_model(cfg, inputs, collect_impacts=True), n, cfg.seed, workers or cfg.workers)
    curve = pooled_curve([e.impacts for e in ens.events if e.impacts])
    written = [write_csv(Path(outdir) / "scaling.csv", curve_rows(curve))]
    summary = {"n_periods": n, "n_disruptions": curve.n_disruptions, "top20_share": curve.top20_share}
    try:
        pairs, fit = length_risk_correlation(inputs.network, ens, cfg.outage_days)
    except ValueError:
        pairs, fit = [], None
    if fit is not None:
        written.append(write_csv(Path(outdir) / "sector_length_risk.csv",
                                 [{"tract": t, "harmonic_mean_sector_km": L, "outage_fraction": r}
                                  for t, L, r in pairs]))
        summary["length_fit"] = {"slope": fit.slope, "intercept": fit.intercept, "slope_se": fit.slope_se,
                                 "intercept_se": fit.intercept_se}
    written.append(write_json(Path(outdir) / "scaling_summary.json", summary))
    write_manifest(outdir, cfg, "scaling", written)
    return summary


def cmd_harden(cfg: RunConfig, outdir, workers=None) -> dict:
    inputs = load_inputs(cfg)
    h = cfg.harden
    n = h.n_periods or cfg.n_periods
    rows, plans = evaluate_strategies(build_model(cfg, inputs), h.strategies, h.rates, n, cfg.seed,
                                      workers or cfg.workers, h.plan_seed, cfg.outage_days)
    written = write_table(outdir, "harden", rows)
    pdir = Path(outdir) / "plans"
    pdir.mkdir(exist_ok=True)
    for plan in plans:
        p = pdir / f"{plan.strategy}_{plan.target_rate:g}.json"
        dump_plan(plan, p)
        written.append(p)
    write_manifest(outdir, cfg, "harden", written, {"n_periods": n})
    return {"rows": rows}


def cmd_calibrate(cfg: RunConfig, outdir) -> dict:
    if cfg.calibrate.targets is None:
        raise ConfigError("calibrate needs calibrate.targets in the config")
    inputs = load_inputs(cfg)
    targets = load_targets(cfg.calibrate.targets)
    ev = EventEvaluator(inputs.network, inputs.grid_points if inputs.grid_points is not None
                        else _default_grid(inputs), cfg.wind, cfg.calibrate.replicates, cfg.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CalibrationWarning)
        res = calibrate(ev, targets, inputs.fragility, inputs.resources, cfg.calibrate.max_iterations)
    report = res.report()
    report["warnings"] = [str(w.message) for w in caught if issubclass(w.category, CalibrationWarning)]
    for w in report["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    written = [write_json(Path(outdir) / "fragility_calibrated.json", res.fragility.to_dict())]
    rd = res.resources.to_dict()
    rd["provenance"] = "calibrated crew counts"
    written.append(write_json(Path(outdir) / "resources_calibrated.json", rd))
    written.append(write_json(Path(outdir) / "calibration_report.json", report))
    write_manifest(outdir, cfg, "calibrate", written)
    return report


def _default_grid(inputs: Inputs):
    from .damage import ComponentTable
    from .windfield import regular_grid

    loc = ComponentTable(inputs.network).location
    return regular_grid(loc[:, 0].min(), loc[:, 0].max(), loc[:, 1].min(), loc[:, 1].max(), 2.0)[1]


def cmd_fixtures(outdir, seed=7, scale=1.0, n_storms=600, n_years=20) -> dict:
    from .fixtures import write_fixtures

    return write_fixtures(outdir, seed, scale, n_storms, n_years)


def cmd_emit_plot_data(tables, outdir=None, id_columns=None) -> list[Path]:
    out = []
    for t in tables:
        t = Path(t)
        rows = long_form(read_csv(t), id_columns)
        dest = Path(outdir) if outdir else t.parent
        dest.mkdir(parents=True, exist_ok=True)
        out.append(write_csv(dest / f"{t.stem}_long.csv", rows))
    return out


# -- entry point -------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="compoundrisk", description="Compound hurricane-blackout-heatwave risk.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config", help="config path or bundled config name")
        s.add_argument("--output", "-o", help=f"output directory (overrides ${ENV_OUTPUT} and the config)")
        s.add_argument("--workers", type=int, help="worker processes (does not change results)")
        s.add_argument("--periods", type=int, help="override n_periods")
        s.add_argument("--seed", type=int, help="override the master seed")
        return s

    sv = sub.add_parser("validate", help="load and check every input of a config")
    sv.add_argument("config")
    with_config("simulate", "run the ensemble and write exceedance, tract and relative-risk tables")
    with_config("scaling", "disruption scaling curve and sector-length correlation")
    with_config("harden", "risk-vs-rate table for the undergrounding strategies")
    with_config("calibrate", "fit fragility medians and crew counts to event targets")
    sf = sub.add_parser("fixtures", help="write the synthetic fixture set")
    sf.add_argument("outdir", nargs="?")
    sf.add_argument("--seed", type=int, default=7)
    sf.add_argument("--scale", type=float, default=1.0)
    sf.add_argument("--storms", type=int, default=600)
    sf.add_argument("--years", type=int, default=20)
    se = sub.add_parser("emit-plot-data", help="reshape output tables into long form")
    se.add_argument("tables", nargs="+")
    se.add_argument("--id", dest="ids", action="append", help="id column (repeatable)")
    se.add_argument("--output", "-o")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            try:
                cfg = resolve_config(args.config)
            except ConfigError as e:
                print(json.dumps({"config": args.config, "ok": False,
                                  "errors": [{"input": "config", "file": args.config, "error": str(e)}]}, indent=1))
                return EXIT_INVALID
            rep = cmd_validate(cfg)
            print(json.dumps(rep, indent=1))
            return EXIT_OK if rep["ok"] else EXIT_INVALID
        if args.command == "fixtures":
            out = Path(args.outdir) if args.outdir else output_dir(None, None, "fixtures")
            m = cmd_fixtures(out, args.seed, args.scale, args.storms, args.years)
            print(json.dumps(m["network"], sort_keys=True))
            return EXIT_OK
        if args.command == "emit-plot-data":
            out = args.output or os.environ.get(ENV_OUTPUT)
            for p in cmd_emit_plot_data(args.tables, out, args.ids):
                print(p)
            return EXIT_OK
        cfg = resolve_config(args.config, {"n_periods": args.periods, "seed": args.seed})
        out = output_dir(cfg, args.output, args.command)
        if args.command == "simulate":
            res = cmd_simulate(cfg, out, args.workers)
        elif args.command == "scaling":
            res = cmd_scaling(cfg, out, args.workers)
        elif args.command == "harden":
            res = cmd_harden(cfg, out, args.workers)
        else:
            res = cmd_calibrate(cfg, out)
        print(json.dumps({"output_dir": str(out), "result": res}, indent=1, default=float))
        return EXIT_OK
    except (ConfigError, InputError) as e:
        diags = getattr(e, "diagnostics", [{"input": "config", "error": str(e)}])
        print(json.dumps({"ok": False, "errors": diags}, indent=1), file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as e:
        print(json.dumps({"ok": False, "errors": [{"input": "file", "error": str(e)}]}), file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:       # runtime failure class
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
