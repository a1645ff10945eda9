"""Command-line pipeline: synth | ingest -> run -> analyze -> report, plus verify.

All commands share one YAML config (see ``configs/desk_scale.yaml``); flags
override it. Output root layout::

    data/panel.csv  data/calendar.txt  data/scenario.yaml
    logs/<experiment>.csv  audit/<experiment>.csv  timings.csv
    analysis/regressions.csv  analysis/table.txt  analysis/maape/<experiment>.csv
    report/...
    manifest.json  run_times.json
    checkpoints/   (only while a run is unfinished)

Exit codes: 0 ok, 2 usage/config, 3 data (including checksum mismatches),
4 model failure (including a failed leakage audit).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import yaml

from . import analysis, metrics, report, runner
from .data import CalendarSpec, Shock, SyntheticScenario, generate_synthetic, ingest_csv, write_csv
from .errors import ConfigError, DataError, ModelError
from .neural.training import TrainConfig

log = logging.getLogger("transitbench")

# wall-clock artifacts; everything else in the tree is reproducible byte for byte
VOLATILE = ("timings.csv", "run_times.json", "report/grid/timing.svg", "report/grid/timing.csv",
            "report/grid/summary.txt", "report/grid/summary.csv")
EXIT = {ConfigError: 2, DataError: 3, ModelError: 4}


# ------------------------------------------------------------------- config

def _date(x, what):
    if x is None or isinstance(x, dt.date):
        return x
    try:
        return dt.date.fromisoformat(str(x))
    except ValueError:
        raise ConfigError(f"{what}: not an ISO date: {x!r}") from None


def _only(d: dict, allowed, where: str):
    unknown = set(d or {}) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    _only(cfg, ("seed", "data", "split", "conditions", "grid", "hyperparameters", "output", "jobs"),
          "config")
    return cfg


def scenario_from(cfg: dict) -> SyntheticScenario:
    raw = dict((cfg.get("data") or {}).get("synthetic") or {})
    _only(raw, [f.name for f in dataclasses.fields(SyntheticScenario)], "data.synthetic")
    if "start_date" in raw:
        raw["start_date"] = _date(raw["start_date"], "data.synthetic.start_date")
    shocks = []
    for i, s in enumerate(raw.pop("shocks", None) or []):
        _only(s, ("start_day", "duration", "level_multiplier", "closed_stations"),
              f"data.synthetic.shocks[{i}]")
        shocks.append(Shock(int(s["start_day"]), s.get("duration"),
                            float(s.get("level_multiplier", 1.0)),
                            tuple(s.get("closed_stations") or ())))
    for key in ("weekly_profile", "holiday_days", "base_range", "base_levels"):
        if raw.get(key) is not None:
            raw[key] = tuple(raw[key])
    try:
        return SyntheticScenario(shocks=tuple(shocks), **raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"data.synthetic: {exc}") from None


def scenario_to_dict(sc: SyntheticScenario) -> dict:
    d = dataclasses.asdict(sc)
    d["start_date"] = sc.start_date.isoformat()
    for k, v in list(d.items()):
        if isinstance(v, tuple):
            d[k] = list(v)
    d["shocks"] = [{"start_day": s.start_day, "duration": s.duration,
                    "level_multiplier": s.level_multiplier,
                    "closed_stations": list(s.closed_stations)} for s in sc.shocks]
    return d


def experiment_configs(cfg: dict, cells=None) -> list[runner.ExperimentConfig]:
    split = cfg.get("split") or {}
    _only(split, ("train_start", "train_end", "test_start", "test_end"), "split")
    hp = cfg.get("hyperparameters") or {}
    _only(hp, ("train", "online", "network", "seasonal_period"), "hyperparameters")
    try:
        base = runner.ExperimentConfig(
            family="LSTM", strategy="static", output="multi",
            train_start=_date(split.get("train_start"), "split.train_start"),
            train_end=_date(split.get("train_end"), "split.train_end"),
            test_start=_date(split.get("test_start"), "split.test_start"),
            test_end=_date(split.get("test_end"), "split.test_end"),
            train=TrainConfig(**(hp.get("train") or {})),
            online=runner.OnlineConfig(**(hp.get("online") or {})),
            network=dict(hp.get("network") or {}),
            seasonal_period=int(hp.get("seasonal_period", 7)),
            seed=int(cfg.get("seed", 0)),
        )
    except TypeError as exc:
        raise ConfigError(f"hyperparameters: {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cells is None:
        cells = _grid_cells(cfg.get("grid", "all"))
    return runner.make_grid(base, cells)


def _grid_cells(grid) -> list[tuple[str, str, str]]:
    if grid in (None, "all"):
        return runner.grid_cells()
    if not isinstance(grid, list):
        raise ConfigError("grid must be 'all' or a list of {model, strategy, output}")
    cells = []
    for i, g in enumerate(grid):
        _only(g, ("model", "strategy", "output"), f"grid[{i}]")
        try:
            cells.append((str(g["model"]).upper(), g["strategy"], g["output"]))
        except KeyError as exc:
            raise ConfigError(f"grid[{i}]: missing {exc}") from None
    return cells


def condition_spec(cfg: dict) -> analysis.ConditionSpec:
    raw = cfg.get("conditions")
    if not raw:
        raise ConfigError("config has no 'conditions' section (covid/protest date ranges)")
    return analysis.ConditionSpec.from_dict(raw)


def calendar_from(cfg: dict, root: Path | None = None) -> CalendarSpec:
    data = cfg.get("data") or {}
    sundays = bool(data.get("treat_sundays_as_holiday", True))
    if data.get("calendar"):
        return CalendarSpec.from_file(data["calendar"], treat_sundays_as_holiday=sundays)
    if root is not None and (root / "data" / "calendar.txt").exists():
        return CalendarSpec.from_file(root / "data" / "calendar.txt", treat_sundays_as_holiday=sundays)
    if data.get("csv"):
        return CalendarSpec(frozenset(), treat_sundays_as_holiday=sundays)
    return scenario_from(cfg).calendar()


def load_panel(cfg: dict, root: Path, data_path=None):
    data = cfg.get("data") or {}
    _only(data, ("synthetic", "csv", "calendar", "treat_sundays_as_holiday"), "data")
    path = data_path or data.get("csv")
    if path is None and (root / "data" / "panel.csv").exists():
        path = root / "data" / "panel.csv"
    if path is not None:
        return ingest_csv(path, calendar_from(cfg, root))
    return generate_synthetic(scenario_from(cfg), int(cfg.get("seed", 0)))


# ----------------------------------------------------------------- manifest

def _sha_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(root: Path, config_path, seed, experiments=None):
    path = root / "manifest.json"
    old = json.loads(path.read_text()) if path.exists() else {}
    files = {}
    for f in sorted(root.rglob("*")):
        rel = f.relative_to(root).as_posix()
        if f.is_dir() or rel == "manifest.json" or rel.startswith("checkpoints/") or rel in VOLATILE:
            continue
        files[rel] = _sha_file(f)
    manifest = {
        "config": str(config_path) if config_path else old.get("config"),
        "seed": seed if seed is not None else old.get("seed"),
        "experiments": experiments if experiments is not None else old.get("experiments", []),
        "files": files,
        "volatile": [v for v in VOLATILE if (root / v).exists()],
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _stamp(root: Path, command: str, started: dt.datetime):
    path = root / "run_times.json"
    times = json.loads(path.read_text()) if path.exists() else {}
    times[command] = {"started": started.isoformat(timespec="seconds"),
                      "finished": dt.datetime.now().isoformat(timespec="seconds")}
    path.write_text(json.dumps(times, indent=2, sort_keys=True) + "\n")


# ----------------------------------------------------------------- commands

def cmd_synth(args, cfg):
    root = Path(args.out)
    scenario = scenario_from(cfg)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    panel = generate_synthetic(scenario, seed)
    (root / "data").mkdir(parents=True, exist_ok=True)
    write_csv(panel, root / "data" / "panel.csv")
    (root / "data" / "calendar.txt").write_text(scenario.calendar().to_text())
    echo = {"seed": seed, "scenario": scenario_to_dict(scenario)}
    (root / "data" / "scenario.yaml").write_text(yaml.safe_dump(echo, sort_keys=True))
    write_manifest(root, args.config, seed)
    print(f"wrote {panel.n_stations} stations x {panel.n_days} days to {root / 'data' / 'panel.csv'}")


def cmd_ingest(args, cfg):
    root = Path(args.out)
    sundays = bool((cfg.get("data") or {}).get("treat_sundays_as_holiday", True))
    calendar = (CalendarSpec.from_file(args.calendar, treat_sundays_as_holiday=sundays)
                if args.calendar else calendar_from(cfg))
    panel = ingest_csv(args.csv, calendar)
    (root / "data").mkdir(parents=True, exist_ok=True)
    write_csv(panel, root / "data" / "panel.csv")
    (root / "data" / "calendar.txt").write_text(calendar.to_text())
    write_manifest(root, args.config, cfg.get("seed"))
    print(f"ingested {panel.n_stations} stations x {panel.n_days} days; "
          f"{panel.ingest_report.summary()}")


def cmd_run(args, cfg):
    root = Path(args.out)
    if args.model or args.strategy or args.output:
        if not (args.model and args.strategy and args.output):
            raise ConfigError("--model, --strategy and --output must be given together")
        cells = [(args.model.upper(), args.strategy, args.output)]
    else:
        cells = runner.grid_cells() if args.grid == "all" else None
    if args.seed is not None:
        cfg = {**cfg, "seed": args.seed}
    configs = experiment_configs(cfg, cells)
    panel = load_panel(cfg, root, args.data)
    for c in configs:  # range problems are config errors; surface them before any training
        c.ranges(panel)
    (root / "logs").mkdir(parents=True, exist_ok=True)
    (root / "audit").mkdir(parents=True, exist_ok=True)
    ck_root = root / "checkpoints"
    jobs = args.jobs or cfg.get("jobs") or os.cpu_count() or 1
    if args.stop_after is not None:
        for c in configs:
            flog, _ = runner.run_experiment(panel, c, ck_root, stop_after=args.stop_after)
        print(f"stopped after {args.stop_after} origin(s); rerun to resume")
        return 0
    result = runner.run_grid(panel, configs, jobs=jobs, checkpoint_root=ck_root)
    for exp_id, flog in result.logs.items():
        flog.to_csv(root / "logs" / f"{exp_id}.csv")
        runner.write_audit(flog, root / "audit" / f"{exp_id}.csv")
        shutil.rmtree(ck_root / exp_id, ignore_errors=True)
        for e in flog.errors:
            log.warning("%s: %s", exp_id, e)
    if ck_root.exists() and not any(ck_root.iterdir()):
        ck_root.rmdir()
    existing = runner.read_timings(root / "timings.csv") if (root / "timings.csv").exists() else {}
    _merge_timings(root / "timings.csv", existing, result.timings)
    write_manifest(root, args.config, cfg.get("seed", 0),
                   [runner.config_to_dict(c) for c in configs])
    for exp_id, err in result.failures.items():
        print(f"FAILED {exp_id}: {err}", file=sys.stderr)
    print(f"{len(result.logs)} experiment log(s) written to {root / 'logs'}")
    return 4 if result.failures else 0


def _merge_timings(path, existing, reports):
    rows = []
    for exp, metrics_ in existing.items():
        if exp not in reports:
            rows.extend((exp, m, v) for m, v in metrics_.items())
    for rep in reports.values():
        rows.extend((e, m, v) for e, m, v, _ in rep.rows())
    counts = {rep.experiment: {r[1]: r[3] for r in rep.rows()} for rep in reports.values()}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["experiment", "metric", "seconds", "samples"])
        for exp, m, v in sorted(rows):
            w.writerow([exp, m, repr(float(v)), counts.get(exp, {}).get(m, "")])


def _logs(root: Path):
    paths = sorted((root / "logs").glob("*.csv"))
    if not paths:
        raise DataError(f"no forecast logs under {root / 'logs'}; run the 'run' command first")
    return [runner.ForecastLog.from_csv(p) for p in paths]


def cmd_analyze(args, cfg):
    root = Path(args.out)
    spec = condition_spec(cfg)
    calendar = calendar_from(cfg, root)
    fits = []
    (root / "analysis" / "maape").mkdir(parents=True, exist_ok=True)
    for flog in _logs(root):
        series = metrics.MaapeSeries.from_log(flog)
        series.to_csv(root / "analysis" / "maape" / f"{flog.experiment}.csv")
        labels = analysis.label_conditions(flog.origins, spec, calendar)
        fits.append(analysis.fit_conditions(series.system, labels, flog.experiment))
    analysis.write_regressions_csv(fits, root / "analysis" / "regressions.csv")
    table = analysis.format_table(fits)
    (root / "analysis" / "table.txt").write_text(table)
    write_manifest(root, args.config, cfg.get("seed"))
    print(table, end="")


def cmd_report(args, cfg):
    root = Path(args.out)
    missing = [p for p in ("analysis/regressions.csv", "analysis/maape", "logs")
               if not (root / p).exists()]
    if missing:
        raise DataError(f"missing inputs under {root}: {', '.join(missing)}")
    spec = condition_spec(cfg)
    shaded = {"covid": list(spec.covid), "protest": list(spec.protest)}
    fits = {f.experiment: f for f in analysis.read_regressions_csv(root / "analysis" / "regressions.csv")}
    series = {p.stem: metrics.MaapeSeries.from_csv(p)
              for p in sorted((root / "analysis" / "maape").glob("*.csv"))}
    timings = {}
    if (root / "timings.csv").exists():
        for exp, m in runner.read_timings(root / "timings.csv").items():
            timings[exp] = runner.TimingReport.from_metrics(exp, m)
    panel = load_panel(cfg, root)
    out = root / "report"
    for flog in _logs(root):
        exp = flog.experiment
        d = out / exp
        report.render_evolution([series[exp]], d, shaded, title=f"{exp}: 7-day rolling MAAPE")
        if exp in fits:
            report.render_condition_bars([fits[exp]], d, title=f"{exp}: condition effects")
        report.render_closed_stations(metrics.closed_station_report(flog, panel), d)
    report.render_evolution(list(series.values()), out / "grid", shaded)
    report.render_condition_bars(list(fits.values()), out / "grid")
    if timings:
        report.render_timing(list(timings.values()), out / "grid")
    text = report.render_summary(list(fits.values()), timings, out / "grid")
    write_manifest(root, args.config, cfg.get("seed"))
    print(text, end="")


def cmd_verify(args, cfg):
    root = Path(args.out)
    path = root / "manifest.json"
    if not path.exists():
        raise DataError(f"no manifest at {path}")
    manifest = json.loads(path.read_text())
    bad = []
    for rel, digest in sorted(manifest["files"].items()):
        f = root / rel
        if not f.exists():
            bad.append(f"missing {rel}")
        elif _sha_file(f) != digest:
            bad.append(f"checksum mismatch {rel}")
    for line in bad:
        print(line)
    print(f"{len(manifest['files']) - len(bad)}/{len(manifest['files'])} files verified")
    leaks = []
    audits = sorted((root / "audit").glob("*.csv"))
    for a in audits:
        flog = runner.ForecastLog(a.stem, (), (), None, None, audit=runner.read_audit(a))
        leaks += [f"{a.stem}: {p}" for p in runner.audit_no_leakage(flog)]
    for line in leaks:
        print(line)
    if audits:
        print(f"leakage audit: {len(audits)} experiment(s), {len(leaks)} problem(s)")
    if bad:
        return 3
    return 4 if leaks else 0


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="transitbench", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="YAML experiment config")
        sp.add_argument("--out", default="out", help="output root (default: out)")

    sp = sub.add_parser("synth", help="generate a synthetic panel")
    common(sp)
    sp.add_argument("--seed", type=int)
    sp = sub.add_parser("ingest", help="validate and import a ridership CSV")
    common(sp, config_required=False)
    sp.add_argument("--csv", required=True)
    sp.add_argument("--calendar")
    sp = sub.add_parser("run", help="run grid cells")
    common(sp)
    sp.add_argument("--data", help="panel CSV (default: <out>/data/panel.csv or synthesized)")
    sp.add_argument("--grid", choices=["all"], help="run all 14 cells instead of the config's list")
    sp.add_argument("--model", choices=[f.lower() for f in runner.FAMILIES])
    sp.add_argument("--strategy", choices=runner.STRATEGIES)
    sp.add_argument("--output", choices=runner.OUTPUTS)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--stop-after", type=int, help=argparse.SUPPRESS)
    sp = sub.add_parser("analyze", help="condition regressions per experiment")
    common(sp)
    sp = sub.add_parser("report", help="charts and summary table")
    common(sp)
    sp = sub.add_parser("verify", help="re-check manifest checksums")
    common(sp, config_required=False)
    return p


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "run": cmd_run, "analyze": cmd_analyze,
            "report": cmd_report, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = dt.datetime.now()
    try:
        cfg = load_config(args.config) if args.config else {}
        code = COMMANDS[args.command](args, cfg) or 0
    except tuple(EXIT) as exc:
        code = next(v for k, v in EXIT.items() if isinstance(exc, k))
        print(f"error: {exc}", file=sys.stderr)
        return code
    root = Path(args.out)
    if root.exists() and args.command not in ("verify",):
        _stamp(root, args.command, started)
    return code


if __name__ == "__main__":
    sys.exit(main())
