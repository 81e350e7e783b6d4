"""Command-line front end.

Every command reads one TOML config (``--config``) patched by ``--set
section.key=value`` overrides, writes into the configured output directory
and finishes with ``manifest.json`` listing each emitted file and its
sha256. Exit codes: 0 ok, 2 data or config error, 3 solver failure.
Log level comes from ``NORDBESS_LOG_LEVEL`` (default WARNING).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, load_config
from .droop import build_meb
from .experiments import ExperimentReport, ExperimentSpec, compare, run_experiment
from .forecaster import backtest, weekly_specs, write_backtest
from .market_data import (
    DataError,
    format_timestamp,
    load_frequency_csv,
    load_hourly_csv,
    to_log_revenue,
    write_hourly_csv,
    write_rejections,
)
from .milp.lp import SolveStatus, SolverError
from .milp.lpformat import export_lp_text
from .scheduling import build_instance, load_scenarios, solve_instance, validate_solution, write_solution

__all__ = ["main", "EXIT_OK", "EXIT_DATA", "EXIT_SOLVER"]

EXIT_OK, EXIT_DATA, EXIT_SOLVER = 0, 2, 3
LOG_ENV = "NORDBESS_LOG_LEVEL"
log = logging.getLogger("nordbess")


class SolveFailed(RuntimeError):
    pass


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(cfg: RunConfig, command: str, files: list[Path]) -> Path:
    out = cfg.out
    manifest = out / "manifest.json"
    # files from earlier commands in the same directory stay listed (rehashed) while they exist
    commands, paths = [], {f.resolve() for f in files}
    if manifest.exists():
        try:
            prev = json.loads(manifest.read_text())
            commands = [c for c in prev.get("commands", []) if c != command]
            paths |= {(out / e["path"]).resolve() for e in prev.get("files", []) if (out / e["path"]).exists()}
        except (ValueError, KeyError, TypeError, AttributeError):
            log.warning("ignoring unreadable %s", manifest)
    root = out.resolve()
    entries = []
    for f in sorted(paths):
        entries.append({"path": f.relative_to(root).as_posix(), "sha256": _sha256(f), "bytes": f.stat().st_size})
    payload = {
        "command": command,
        "commands": sorted(commands + [command]),
        "version": __version__,
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "files": entries,
    }
    manifest.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return manifest


def _json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------- commands

def cmd_ingest(cfg: RunConfig) -> list[Path]:
    files = [cfg.price_file(z, m) for z in cfg.data.zones for m in cfg.data.markets]
    cfg.require(*files)
    out = cfg.out / "ingest"
    out.mkdir(parents=True, exist_ok=True)
    written, summary = [], []
    for zone in cfg.data.zones:
        for market in cfg.data.markets:
            series = load_hourly_csv(cfg.price_file(zone, market), zone=zone, market=market)
            lr = to_log_revenue(series)
            stem = f"{zone}_{market}".lower()
            clean = out / f"{stem}_clean.csv"
            write_hourly_csv(series, clean)
            logrev = out / f"{stem}_logrev.csv"
            with logrev.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["timestamp", "hour", "day", "log_revenue"])
                for t, h, d, v in zip(lr.timestamps, lr.hour, lr.day, lr.value):
                    w.writerow([format_timestamp(t), int(h), int(d), repr(float(v))])
            rej = out / f"{stem}_rejections.jsonl"
            write_rejections(lr.rejected, rej)
            written += [clean, logrev, rej]
            summary.append({"zone": zone, "market": market, "hours": len(series), "kept": len(lr),
                            "rejected": len(lr.rejected), "gaps": [format_timestamp(g) for g in series.gaps]})
            log.info("ingested %s %s: %d hours, %d rejected", zone, market, len(series), len(lr.rejected))
    written.append(_json(out / "summary.json", summary))
    return written


def cmd_forecast(cfg: RunConfig) -> list[Path]:
    files = [cfg.price_file(z, m) for z in cfg.data.zones for m in cfg.data.markets]
    cfg.require(*files)
    g = cfg.gam
    specs = weekly_specs(g.hour_k, g.day_k, g.cyclic_hour)
    out = cfg.out / "forecast"
    written, overview = [], []
    for zone in cfg.data.zones:
        for market in cfg.data.markets:
            lr = to_log_revenue(load_hourly_csv(cfg.price_file(zone, market), zone=zone, market=market))
            res = backtest(lr, g.train_hours, g.horizon_hours, specs, g.grid(), g.scale, g.workers)
            if not res.weeks:
                raise DataError(f"{zone} {market}: {len(lr)} usable hours do not cover one training window plus a week")
            written += write_backtest(res, out, zone, market)
            s = res.summary()
            overview.append({"zone": zone, "market": market, "windows": s["windows"],
                             "adj_r2_mean": s["adj_r2_mean"], "mape_mean": s["mape_mean"]})
            log.info("forecast %s %s: %d windows, mean MAPE %.4f", zone, market, s["windows"], s["mape_mean"])
    written.append(_json(out / "summary.json", overview))
    return written


def cmd_simulate_meb(cfg: RunConfig) -> list[Path]:
    paths = [cfg.path(p) for p in cfg.data.frequency]
    if not paths:
        raise DataError("data.frequency lists no trace files")
    cfg.require(*paths)
    traces = [load_frequency_csv(p) for p in paths]
    structure = cfg.bids.build()
    hours = min(tr.hours for tr in traces)
    mebs = build_meb(traces, structure.pairs, cfg.bess.dt_minutes, cfg.droop.build(), hours=hours)
    out = cfg.out / "meb"
    out.mkdir(parents=True, exist_ok=True)
    table = out / "meb.csv"
    mebs.write_csv(table)
    totals = []
    for s in range(mebs.n_scenarios):
        for k, pair in enumerate(mebs.pairs):
            totals.append({"scenario": s, "pair": pair.label,
                           "e_dch_mwh": float(mebs.e_dch[s, :, k].sum()), "e_ch_mwh": float(mebs.e_ch[s, :, k].sum())})
    return [table, _json(out / "summary.json", {"hours": hours, "dt_minutes": cfg.bess.dt_minutes, "totals": totals})]


def _instance(cfg: RunConfig):
    path = cfg.path(cfg.data.scenarios)
    if not cfg.data.scenarios:
        raise DataError("data.scenarios is not set")
    cfg.require(path)
    scenarios = load_scenarios(path)
    params = cfg.bess.params()
    short = [i for i, sc in enumerate(scenarios) if sc.hours < params.horizon_hours]
    if short:
        raise DataError(f"scenarios {short} cover fewer than {params.horizon_hours} hours")
    structure = cfg.bids.build()
    traces = [sc.frequency_trace for sc in scenarios]
    mebs = build_meb(traces, structure.pairs, params.dt_minutes, cfg.droop.build(), hours=params.horizon_hours)
    return build_instance(params, structure, scenarios, mebs)


def cmd_optimize(cfg: RunConfig) -> list[Path]:
    inst = _instance(cfg)
    out = cfg.out / "optimize"
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "solver_log.txt"
    with log_path.open("w") as fh:
        res, sol = solve_instance(inst, cfg.solver.build(), fh)
    status = {"status": res.status.value, "objective": res.objective if sol is not None else None,
              "bound": res.bound if math.isfinite(res.bound) else None, "nodes": res.nodes, "lp_iterations": res.lp_iterations}
    written = [log_path]
    if sol is None:
        written.append(_json(out / "status.json", status))
        write_manifest(cfg, "optimize", written)
        raise SolveFailed(f"solver ended with {res.status.value} and no feasible schedule")
    report = validate_solution(sol, inst)
    sol_json, soc_csv = out / "solution.json", out / "soc.csv"
    write_solution(sol, inst, sol_json, soc_csv)
    status["validation"] = {"ok": report.ok, "violations": [str(v) for v in report.violations[:50]],
                            "by_constraint": report.by_constraint()}
    written += [sol_json, soc_csv, _json(out / "status.json", status)]
    if not report.ok:
        write_manifest(cfg, "optimize", written)
        raise SolveFailed(f"incumbent failed validation: {report.violations[0]}")
    if res.status is SolveStatus.LIMIT:
        log.warning("solver stopped on a limit; the schedule is feasible but not proven optimal")
    return written


def cmd_export_lp(cfg: RunConfig) -> list[Path]:
    inst = _instance(cfg)
    out = cfg.out / "export"
    out.mkdir(parents=True, exist_ok=True)
    path = out / "model.lp"
    path.write_text(export_lp_text(inst.lp))
    info = {"variables": inst.lp.shape[1], "rows": inst.lp.shape[0], "binaries": inst.n_binaries}
    return [path, _json(out / "model.json", info)]


def cmd_experiment(cfg: RunConfig) -> list[Path]:
    runs = cfg.experiment.runs
    if not runs:
        raise DataError("experiment.runs is empty")
    out = cfg.out / "experiment"
    reports: dict[str, ExperimentReport] = {}
    written = []
    for i, run in enumerate(runs):
        fields = {"seed": cfg.seed, "name": f"run{i}", **run}
        try:
            spec = ExperimentSpec(**fields)
        except TypeError as exc:
            raise DataError(f"experiment run {i}: {exc}") from exc
        if spec.name in reports:
            raise DataError(f"duplicate experiment name {spec.name!r}")
        rep = run_experiment(spec)
        reports[spec.name] = rep
        written += rep.write(out)
        if rep.partial:
            log.warning("run %s is partial: %s", spec.name, rep.flags)
    deltas = []
    for a, b in cfg.experiment.compare:
        if a not in reports or b not in reports:
            raise DataError(f"compare refers to unknown run {a!r} or {b!r}")
        deltas.append(compare(reports[a], reports[b]))
    if deltas:
        written.append(_json(out / "comparisons.json", deltas))
        plot = out / "plot_comparisons.csv"
        with plot.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a", "b", "quantity", "a_value", "b_value", "delta", "delta_pct"])
            for d in deltas:
                for q in ("profit", "cost", "acceptance_hours"):
                    v = d[q]
                    w.writerow([d["a"], d["b"], q, repr(v["a"]), repr(v["b"]), repr(v["delta"]),
                                "" if v["delta_pct"] is None else repr(v["delta_pct"])])
        written.append(plot)
    return written


COMMANDS = {
    "ingest": (cmd_ingest, "validate hourly price CSVs and derive log-revenue series"),
    "forecast": (cmd_forecast, "rolling GAM backtest with weekly MAPE"),
    "simulate-meb": (cmd_simulate_meb, "market energy blocks from frequency traces"),
    "optimize": (cmd_optimize, "solve the stochastic bidding model"),
    "experiment": (cmd_experiment, "run study designs and comparisons"),
    "export-lp": (cmd_export_lp, "write the bidding model in LP format"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nordbess", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"nordbess {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, text) in COMMANDS.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", "-c", help="TOML run configuration")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. bess.soc_mode=flexible (repeatable)")
        sp.add_argument("--seed", type=int, help="shortcut for --set seed=N")
        sp.add_argument("--output-dir", "-o", help="shortcut for --set output_dir=PATH")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.output_dir is not None:
        overrides.append(f"output_dir={json.dumps(str(Path(args.output_dir).resolve()))}")
    func = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config, overrides)
        cfg.out.mkdir(parents=True, exist_ok=True)
        files = func(cfg)
        write_manifest(cfg, args.command, files)
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        for line, reason in getattr(exc, "problems", ())[:20]:
            print(f"  line {line}: {reason}", file=sys.stderr)
        return EXIT_DATA
    except (SolveFailed, SolverError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
