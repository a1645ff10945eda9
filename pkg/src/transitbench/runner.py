"""Rolling-origin experiment runner for the strategy grid.

Each experiment trains a baseline on the training range, then walks the test
range one forecast origin at a time. At origin ``o`` the model sees days
``< o``, forecasts days ``o..o+6`` and, for the online strategy, is updated
afterwards with the windows whose targets have just become complete.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import arima
from .data import (HORIZON, LOOKBACK, RidershipPanel, build_windows, fit_normalization,
                   valid_origins)
from .errors import ConfigError, DataError, ModelError
from .neural import checkpoint as ckpt
from .neural.network import Network, NetworkSpec
from .neural.training import TrainConfig, fine_tune, make_optimizer, train

log = logging.getLogger(__name__)

FAMILIES = ("ARIMA", "SARIMA", "MLP", "CNN", "LSTM")
STATISTICAL = ("ARIMA", "SARIMA")
STRATEGIES = ("static", "online")
OUTPUTS = ("single", "multi")
CHECKPOINT_EVERY = 30


def grid_cells() -> list[tuple[str, str, str]]:
    """The 14 (family, strategy, output) cells: 12 neural plus 2 statistical."""
    cells = [(fam, strat, out) for strat in STRATEGIES for out in OUTPUTS
             for fam in ("MLP", "CNN", "LSTM")]
    cells += [("ARIMA", "online", "single"), ("SARIMA", "online", "single")]
    return cells


@dataclass(frozen=True)
class OnlineConfig:
    window: int = 90
    epochs: int = 1
    learning_rate: float | None = None  # None: reuse the baseline rate
    batch_size: int | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    family: str
    strategy: str
    output: str
    train_start: dt.date | None = None
    train_end: dt.date | None = None   # inclusive
    test_start: dt.date | None = None
    test_end: dt.date | None = None    # inclusive
    train: TrainConfig = TrainConfig()
    online: OnlineConfig = OnlineConfig()
    network: dict = field(default_factory=dict)  # NetworkSpec overrides
    seasonal_period: int = 7
    seed: int = 0

    def __post_init__(self):
        fam = self.family.upper()
        object.__setattr__(self, "family", fam)
        if fam not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown training strategy {self.strategy!r}")
        if self.output not in OUTPUTS:
            raise ConfigError(f"unknown output design {self.output!r}")
        if fam in STATISTICAL and (self.strategy, self.output) != ("online", "single"):
            raise ConfigError(f"{fam} is univariate and updates online: only the "
                              f"single-output online cell is defined, not "
                              f"{self.output}-output {self.strategy}")
        if self.online.window < 1 or self.online.epochs < 0:
            raise ConfigError("online window must be >= 1 and epochs >= 0")

    @property
    def experiment_id(self) -> str:
        return f"{self.family.lower()}-{self.output}-{self.strategy}"

    def fingerprint(self) -> str:
        blob = json.dumps(config_to_dict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def ranges(self, panel: RidershipPanel) -> tuple[int, int, int, int]:
        """Half-open day-index ranges ``(train_lo, train_hi, test_lo, test_hi)``."""
        n = panel.n_days
        lo = 0 if self.train_start is None else panel.day_index(self.train_start)
        if self.train_end is not None:
            hi = panel.day_index(self.train_end) + 1
        elif self.test_start is not None:
            hi = panel.day_index(self.test_start)
        else:
            hi = n // 2
        t_lo = hi if self.test_start is None else panel.day_index(self.test_start)
        t_hi = n if self.test_end is None else panel.day_index(self.test_end) + 1
        if hi - lo < LOOKBACK + HORIZON:
            raise ConfigError(f"training range has {hi - lo} days; needs >= {LOOKBACK + HORIZON}")
        if t_lo < hi:
            raise ConfigError("test range must start after the training range")
        if t_hi - t_lo < HORIZON:
            raise ConfigError("test range shorter than the 7-day horizon")
        if t_lo < LOOKBACK:
            raise ConfigError("test range starts before a full lookback is available")
        return lo, hi, t_lo, t_hi


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    for k in ("train_start", "train_end", "test_start", "test_end"):
        if d[k] is not None:
            d[k] = d[k].isoformat()
    return d


# ------------------------------------------------------------------------ logs

@dataclass
class ForecastLog:
    """Predictions and truths in original units, indexed ``[origin, station, horizon]``."""

    experiment: str
    stations: tuple[str, ...]
    origins: tuple[dt.date, ...]
    pred: np.ndarray
    truth: np.ndarray
    errors: list[str] = field(default_factory=list)
    audit: list[dict] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    complete: bool = True

    @property
    def n_records(self) -> int:
        return int(self.pred.size)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["experiment", "station", "origin", "horizon", "pred", "truth"])
            for i, origin in enumerate(self.origins):
                iso = origin.isoformat()
                for s, station in enumerate(self.stations):
                    for h in range(HORIZON):
                        w.writerow([self.experiment, station, iso, h + 1,
                                    repr(float(self.pred[i, s, h])), _num(self.truth[i, s, h])])

    @classmethod
    def from_csv(cls, path) -> "ForecastLog":
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                rows.append(row)
        if not rows:
            raise DataError(f"{path}: empty forecast log")
        stations = tuple(dict.fromkeys(r["station"] for r in rows))
        origins = tuple(dt.date.fromisoformat(o) for o in dict.fromkeys(r["origin"] for r in rows))
        si = {s: i for i, s in enumerate(stations)}
        oi = {o.isoformat(): i for i, o in enumerate(origins)}
        pred = np.full((len(origins), len(stations), HORIZON), np.nan)
        truth = np.full_like(pred, np.nan)
        for r in rows:
            idx = (oi[r["origin"]], si[r["station"]], int(r["horizon"]) - 1)
            pred[idx] = float(r["pred"])
            truth[idx] = float(r["truth"])
        return cls(rows[0]["experiment"], stations, origins, pred, truth)


def _num(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


@dataclass
class TimingReport:
    experiment: str
    baseline_seconds: float
    baseline_per_model: list[float]
    update_mean: float
    update_samples: int
    simulation_mean: float
    simulation_samples: int
    output: str = "multi"
    per_station: float | None = None  # set when rebuilt from a CSV

    @classmethod
    def from_metrics(cls, experiment: str, m: dict) -> "TimingReport":
        """Rebuild from the ``metric -> seconds`` mapping of a timings CSV."""
        return cls(experiment, m.get("baseline_total_s", 0.0), [], m.get("update_mean_s", 0.0), 0,
                   m.get("simulation_mean_s", 0.0), 0,
                   output=experiment.split("-")[1] if experiment.count("-") >= 2 else "multi",
                   per_station=m.get("baseline_per_station_s"))

    @property
    def baseline_per_station(self) -> float:
        """Single-output: mean per-station training time; multi-output: the model's time."""
        if self.per_station is not None:
            return self.per_station
        if self.output == "single" and self.baseline_per_model:
            return float(np.mean(self.baseline_per_model))
        return self.baseline_seconds

    def rows(self):
        return [
            (self.experiment, "baseline_total_s", self.baseline_seconds, len(self.baseline_per_model)),
            (self.experiment, "baseline_per_station_s", self.baseline_per_station,
             len(self.baseline_per_model)),
            (self.experiment, "update_mean_s", self.update_mean, self.update_samples),
            (self.experiment, "simulation_mean_s", self.simulation_mean, self.simulation_samples),
        ]


def write_timings(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["experiment", "metric", "seconds", "samples"])
        for rep in reports:
            for exp, metric, value, n in rep.rows():
                w.writerow([exp, metric, repr(float(value)), n])


def read_timings(path) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["experiment"], {})[row["metric"]] = float(row["seconds"])
    return out


def measure_timing(log_: ForecastLog, output: str | None = None) -> TimingReport:
    """Aggregate the wall-clock samples a run recorded.

    Single-output runs report per-station training time; compare them with
    multi-output runs by multiplying by the station count.
    """
    t = log_.timings
    base = [float(x) for x in t.get("baseline", [])]
    upd = [float(x) for x in t.get("update", [])]
    sim = [float(x) for x in t.get("simulation", [])]
    if output is None:
        output = log_.experiment.split("-")[1] if log_.experiment.count("-") >= 2 else "multi"
    return TimingReport(
        experiment=log_.experiment,
        baseline_seconds=float(sum(base)),
        baseline_per_model=base,
        update_mean=float(np.mean(upd)) if upd else 0.0,
        update_samples=len(upd),
        simulation_mean=float(np.mean(sim)) if sim else 0.0,
        simulation_samples=len(sim),
        output=output,
    )


# --------------------------------------------------------------------- models

class _NeuralModel:
    """One network plus optimizer state and the last data day it has seen."""

    def __init__(self, spec: NetworkSpec, seed: int):
        self.net = Network(spec, seed)
        self.optimizer = None
        self.last_day = -1

    def arrays(self) -> dict:
        out = dict(ckpt.network_arrays(self.net))
        if self.optimizer is not None:
            out.update(self.optimizer.state_arrays())
        out["meta/last_day"] = np.array([float(self.last_day)])
        return out

    def load(self, arrays, opt_config):
        ckpt.load_into(self.net, arrays)
        self.optimizer = make_optimizer(opt_config)
        self.optimizer.load_state_arrays(arrays)
        self.last_day = int(arrays["meta/last_day"][0])


class _Runner:
    def __init__(self, panel: RidershipPanel, cfg: ExperimentConfig):
        self.panel = panel
        self.cfg = cfg
        self.lo, self.hi, self.t_lo, self.t_hi = cfg.ranges(panel)
        self.origins = valid_origins(panel.n_days, start=self.t_lo, stop=self.t_hi - HORIZON + 1)
        if len(self.origins) == 0:
            raise ConfigError("test range yields no forecast origins")
        self.norm = fit_normalization(panel, (self.lo, self.hi))
        self.normalized = self.norm.normalize(panel.counts)
        self.temporal = panel.temporal_matrix()
        self.S = panel.n_stations
        self.single = cfg.output == "single"
        n_o = len(self.origins)
        self.pred = np.full((n_o, self.S, HORIZON), np.nan)
        self.truth = np.stack([panel.counts[:, o:o + HORIZON] for o in self.origins]).astype(float)
        self.errors: list[str] = []
        self.audit: list[dict] = []
        self.timings = {"baseline": [], "update": [], "simulation": []}
        self.next_index = 0
        self.models = None
        online = cfg.online
        self.online_train = dataclasses.replace(
            cfg.train, epochs=online.epochs,
            learning_rate=cfg.train.learning_rate if online.learning_rate is None
            else online.learning_rate,
            batch_size=cfg.train.batch_size if online.batch_size is None else online.batch_size)

    # ---------------------------------------------------------- persistence
    def _state_dir(self, root) -> Path:
        return Path(root) / self.cfg.experiment_id

    def save(self, root) -> None:
        d = self._state_dir(root)
        d.mkdir(parents=True, exist_ok=True)
        tmp = d / "progress.json.tmp"
        np.save(d / "pred.npy", self.pred)
        if self.cfg.family in STATISTICAL:
            for s, fit in enumerate(self.models):
                (d / f"model_{s:04d}.txt").write_text(fit.to_text())
        else:
            for s, model in enumerate(self.models):
                ckpt.save(d / f"model_{s:04d}.bin", model.arrays())
        tmp.write_text(json.dumps({
            "fingerprint": self.cfg.fingerprint(),
            "next_index": self.next_index,
            "errors": self.errors,
            "audit": self.audit,
            "timings": self.timings,
        }))
        tmp.replace(d / "progress.json")

    def try_resume(self, root) -> bool:
        d = self._state_dir(root)
        prog = d / "progress.json"
        if not prog.exists():
            return False
        state = json.loads(prog.read_text())
        if state["fingerprint"] != self.cfg.fingerprint():
            log.warning("%s: checkpoint belongs to a different config; starting over",
                        self.cfg.experiment_id)
            return False
        self.next_index = state["next_index"]
        self.errors = state["errors"]
        self.audit = state["audit"]
        self.timings = state["timings"]
        self.pred = np.load(d / "pred.npy")
        n_models = self.S if self.single else 1
        if self.cfg.family in STATISTICAL:
            self.models = []
            for s in range(n_models):
                upto = self.origins[self.next_index] if self.next_index < len(self.origins) \
                    else self.origins[-1] + 1
                series = self.normalized[s, self.lo:upto]
                self.models.append(arima.ArimaFit.from_text(
                    (d / f"model_{s:04d}.txt").read_text(), series=series))
        else:
            self.models = []
            for s in range(n_models):
                model = _NeuralModel(self._spec(), self._model_seed(s))
                model.load(ckpt.load(d / f"model_{s:04d}.bin"),
                           self.online_train if self.cfg.strategy == "online" else self.cfg.train)
                self.models.append(model)
        log.info("%s: resumed at origin %d/%d", self.cfg.experiment_id, self.next_index,
                 len(self.origins))
        return True

    # -------------------------------------------------------------- neural
    def _spec(self) -> NetworkSpec:
        s = 1 if self.single else self.S
        return NetworkSpec(self.cfg.family, stations_in=s, stations_out=s, **self.cfg.network)

    def _model_seed(self, s: int) -> int:
        return int(np.random.SeedSequence([self.cfg.seed, s]).generate_state(1)[0])

    def _windows(self, s: int | None, origins):
        block = self.normalized if s is None else self.normalized[s:s + 1]
        return build_windows(block, self.temporal, np.asarray(origins, dtype=np.int64))

    def _train_origins(self):
        return valid_origins(self.panel.n_days, start=self.lo + LOOKBACK, stop=self.hi - HORIZON + 1)

    def baseline_neural(self):
        self.models = []
        origins = self._train_origins()
        if len(origins) == 0:
            raise ConfigError("training range too short for a single window")
        for s in range(self.S if self.single else 1):
            model = _NeuralModel(self._spec(), self._model_seed(s))
            wins = self._windows(s if self.single else None, origins)
            cfg = dataclasses.replace(self.cfg.train, seed=self._model_seed(s))
            t0 = time.perf_counter()
            res = train(model.net, wins, cfg)
            self.timings["baseline"].append(time.perf_counter() - t0)
            model.optimizer = res.optimizer
            model.last_day = int(origins[-1]) + HORIZON - 1
            if self.cfg.strategy == "online":
                # online steps keep the Adam moments but use the online step size
                model.optimizer.config = self.online_train
            self.models.append(model)

    def _record(self, i: int, s: int | None, pred_norm: np.ndarray):
        """Denormalize, clamp to >= 0 and store predictions for origin index ``i``."""
        if s is None:
            self.pred[i] = np.maximum(self.norm.denormalize(pred_norm), 0.0)
        else:
            self.pred[i, s] = np.maximum(pred_norm * self.norm.scale[s], 0.0)

    def step_neural(self, i: int):
        o = int(self.origins[i])
        units = range(self.S) if self.single else [None]
        t0 = time.perf_counter()
        for k, s in enumerate(units):
            model = self.models[k]
            before = model.net.checksum()
            win = self._windows(s, [o])
            out = model.net.predict(win.lookback, win.flat_features)[0]
            after = model.net.checksum()
            self.audit.append({"origin": i, "day": o, "unit": k, "before": before,
                               "after": after, "last_day": model.last_day})
            self._record(i, s, out)
        t1 = time.perf_counter()
        self.timings["simulation"].append(t1 - t0)
        if self.cfg.strategy != "online":
            return
        newest = o - HORIZON + 1  # the window whose target ends on day o
        first = max(newest - self.cfg.online.window + 1, LOOKBACK)
        if newest < first:
            return
        recent = np.arange(first, newest + 1)
        for k, s in enumerate(units):
            model = self.models[k]
            snapshot = model.net.get_flat()
            opt_state = {key: v.copy() for key, v in model.optimizer.state.items()}
            opt_steps = model.optimizer.steps
            try:
                fine_tune(model.net, self._windows(s, recent), self.online_train,
                          model.optimizer, rng_key=(k, i))
                model.last_day = o
            except ModelError as exc:
                model.net.set_flat(snapshot)
                model.optimizer.state, model.optimizer.steps = opt_state, opt_steps
                self.errors.append(f"origin {self.panel.dates[o]} unit {k}: {exc}")
                log.warning("%s: %s", self.cfg.experiment_id, self.errors[-1])
        self.timings["update"].append(time.perf_counter() - t1)

    def static_block(self, i: int, stop: int):
        """Forecast origins ``i..stop-1`` with frozen models.

        Predictions are computed over the whole aligned block of
        ``CHECKPOINT_EVERY`` origins containing ``i``, so an interrupted and
        resumed run multiplies the same matrix shapes as a straight one and
        matches it bit for bit.
        """
        b0 = (i // CHECKPOINT_EVERY) * CHECKPOINT_EVERY
        b1 = min(b0 + CHECKPOINT_EVERY, len(self.origins))
        units = range(self.S) if self.single else [None]
        t0 = time.perf_counter()
        for k, s in enumerate(units):
            model = self.models[k]
            before = model.net.checksum()
            win = self._windows(s, self.origins[b0:b1])
            out = model.net.predict(win.lookback, win.flat_features)
            after = model.net.checksum()
            for j in range(i, stop):
                self._record(j, s, out[j - b0])
            self.audit.append({"origin": i, "day": int(self.origins[i]), "unit": k,
                               "before": before, "after": after, "last_day": model.last_day})
        self.timings["simulation"].append(time.perf_counter() - t0)

    # ---------------------------------------------------------------- ARIMA
    def baseline_arima(self):
        seasonal = self.cfg.family == "SARIMA"
        self.models = []
        for s in range(self.S):
            series = self.normalized[s, self.lo:self.hi]
            t0 = time.perf_counter()
            fit = arima.stepwise_select(series, seasonal=seasonal, m=self.cfg.seasonal_period)
            gap = self.normalized[s, self.hi:self.t_lo]
            if len(gap):
                fit = arima.update(fit, gap)
            self.timings["baseline"].append(time.perf_counter() - t0)
            self.models.append(fit)

    def step_arima(self, i: int):
        o = int(self.origins[i])
        t0 = time.perf_counter()
        for s, fit in enumerate(self.models):
            before = fit.to_text()
            try:
                out = arima.forecast(fit, horizon=HORIZON)
                if not np.all(np.isfinite(out)):
                    raise ModelError("non-finite forecast")
            except ModelError as exc:
                self.errors.append(f"origin {self.panel.dates[o]} station {s}: {exc}")
                out = np.full(HORIZON, fit.series[-1])
            self.audit.append({"origin": i, "day": o, "unit": s, "before": _sha(before),
                               "after": _sha(fit.to_text()),
                               "last_day": self.lo + len(fit.series) - 1})
            self._record(i, s, out)
        t1 = time.perf_counter()
        self.timings["simulation"].append(t1 - t0)
        for s, fit in enumerate(self.models):
            new = self.normalized[s, o:o + 1]
            try:
                self.models[s] = arima.update(fit, new)
            except (ModelError, DataError) as exc:
                self.errors.append(f"origin {self.panel.dates[o]} station {s}: {exc}")
                log.warning("%s: %s", self.cfg.experiment_id, self.errors[-1])
                self.models[s] = dataclasses.replace(fit, series=np.concatenate([fit.series, new]))
        self.timings["update"].append(time.perf_counter() - t1)

    # ----------------------------------------------------------------- loop
    def run(self, checkpoint_dir=None, stop_after: int | None = None) -> ForecastLog:
        resumed = checkpoint_dir is not None and self.try_resume(checkpoint_dir)
        if not resumed:
            if self.cfg.family in STATISTICAL:
                self.baseline_arima()
            else:
                self.baseline_neural()
            if checkpoint_dir is not None:
                self.save(checkpoint_dir)
        processed = 0
        statistical = self.cfg.family in STATISTICAL
        static = not statistical and self.cfg.strategy == "static"
        n = len(self.origins)
        while self.next_index < n:
            if stop_after is not None and processed >= stop_after:
                break
            i = self.next_index
            if static:
                stop = min((i // CHECKPOINT_EVERY + 1) * CHECKPOINT_EVERY, n)
                if stop_after is not None:
                    stop = min(stop, i + stop_after - processed)
                self.static_block(i, stop)
            else:
                stop = i + 1
                if statistical:
                    self.step_arima(i)
                else:
                    self.step_neural(i)
            processed += stop - i
            self.next_index = stop
            if checkpoint_dir is not None and self.next_index % CHECKPOINT_EVERY == 0:
                self.save(checkpoint_dir)
        complete = self.next_index >= len(self.origins)
        if checkpoint_dir is not None:
            self.save(checkpoint_dir)
        return ForecastLog(
            experiment=self.cfg.experiment_id,
            stations=self.panel.stations,
            origins=tuple(self.panel.dates[int(o)] for o in self.origins),
            pred=self.pred, truth=self.truth, errors=list(self.errors),
            audit=list(self.audit), timings=self.timings, complete=complete,
        )


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def run_experiment(panel: RidershipPanel, config: ExperimentConfig, checkpoint_dir=None,
                   stop_after: int | None = None) -> tuple[ForecastLog, TimingReport]:
    """Run one grid cell end to end.

    With ``checkpoint_dir`` the state is saved every 30 origins and an
    existing checkpoint for the same config is resumed. ``stop_after`` caps
    the origins processed in this call (the returned log is then marked
    incomplete).
    """
    runner = _Runner(panel, config)
    flog = runner.run(checkpoint_dir, stop_after)
    return flog, measure_timing(flog, config.output)


def audit_no_leakage(flog: ForecastLog) -> list[str]:
    """Problems found in the parameter audit; empty when the run is clean.

    Each forecast must leave the parameters untouched, and the parameters in
    use at origin ``o`` may only have seen data from days before ``o``.
    """
    problems = []
    for rec in flog.audit:
        where = f"origin #{rec['origin']} unit {rec['unit']}"
        if rec["before"] != rec["after"]:
            problems.append(f"{where}: forecast changed parameters")
        if rec["last_day"] >= rec["day"]:
            problems.append(f"{where}: parameters had seen day {rec['last_day']} "
                            f"before forecasting from day {rec['day']}")
    if not flog.audit:
        problems.append("no audit records")
    return problems


AUDIT_FIELDS = ("origin", "day", "unit", "before", "after", "last_day")


def write_audit(flog: ForecastLog, path) -> None:
    """Parameter audit trail as CSV; day fields are panel day indices."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AUDIT_FIELDS)
        for rec in flog.audit:
            w.writerow([rec[k] for k in AUDIT_FIELDS])


def read_audit(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: (v if k in ("before", "after") else int(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


@dataclass
class GridResult:
    logs: dict[str, ForecastLog] = field(default_factory=dict)
    timings: dict[str, TimingReport] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)


def _run_cell(args):
    panel, cfg, checkpoint_root = args
    try:
        flog, rep = run_experiment(panel, cfg, checkpoint_root)
        return cfg.experiment_id, flog, rep, None
    except Exception as exc:  # isolate per-cell failures
        log.exception("cell %s failed", cfg.experiment_id)
        return cfg.experiment_id, None, None, f"{type(exc).__name__}: {exc}"


def run_grid(panel: RidershipPanel, configs, jobs: int = 1, checkpoint_root=None) -> GridResult:
    """Run each config; one failing cell does not stop the others."""
    configs = list(configs)
    ids = [c.experiment_id for c in configs]
    if len(set(ids)) != len(ids):
        raise ConfigError("grid contains duplicate cells")
    result = GridResult()
    work = [(panel, cfg, checkpoint_root) for cfg in configs]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_cell, work))
    else:
        outcomes = [_run_cell(w) for w in work]
    for exp_id, flog, rep, err in outcomes:
        if err is not None:
            result.failures[exp_id] = err
        else:
            result.logs[exp_id] = flog
            result.timings[exp_id] = rep
    return result


def make_grid(base: ExperimentConfig, cells=None) -> list[ExperimentConfig]:
    """Expand ``cells`` (default: all 14) into configs sharing ``base``'s settings."""
    cells = grid_cells() if cells is None else cells
    return [dataclasses.replace(base, family=f, strategy=st, output=o) for f, st, o in cells]
