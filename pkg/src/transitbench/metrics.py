"""MAAPE at element, system-day and rolling level, plus the closed-station table.

Daily values are indexed by forecast origin: ``MAAPE_t`` averages the
arctangent absolute percentage error over every station and the 7 horizons
forecast from origin ``t``. Units are radians in ``[0, pi/2]``.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError

HALF_PI = math.pi / 2


def aape(truth, pred):
    """Elementwise ``arctan(|pred - truth| / truth)``.

    A zero truth scores 0 when the prediction is also 0 and pi/2 otherwise.
    Works on scalars and arrays; negative or NaN inputs raise ``DataError``.
    """
    y = np.asarray(truth, dtype=float)
    f = np.asarray(pred, dtype=float)
    if np.isnan(y).any() or np.isnan(f).any():
        raise DataError("aape: NaN input")
    if (y < 0).any() or (f < 0).any():
        raise DataError("aape: truth and prediction must be nonnegative")
    y, f = np.broadcast_arrays(y, f)
    err = np.abs(f - y)
    out = np.empty(y.shape)
    pos = y > 0
    out[pos] = np.arctan(err[pos] / y[pos])
    out[~pos] = np.where(f[~pos] > 0, HALF_PI, 0.0)
    return float(out) if out.ndim == 0 else out


def _check_complete(flog):
    gaps = np.argwhere(np.isnan(flog.pred) | np.isnan(flog.truth))
    if len(gaps):
        shown = ", ".join(f"({flog.origins[o]}, {flog.stations[s]}, h{h + 1})"
                          for o, s, h in gaps[:10])
        more = f" and {len(gaps) - 10} more" if len(gaps) > 10 else ""
        raise DataError(f"forecast log has missing records: {shown}{more}")


def system_maape(flog, day: dt.date) -> float:
    """Mean AAPE over all stations and horizons forecast from origin ``day``."""
    try:
        i = flog.origins.index(day)
    except ValueError:
        raise DataError(f"no forecasts logged for origin {day}") from None
    sub = type(flog)(flog.experiment, flog.stations, (day,), flog.pred[i:i + 1],
                     flog.truth[i:i + 1])
    _check_complete(sub)
    return float(min(np.mean(aape(flog.truth[i], flog.pred[i])), HALF_PI))


def daily_maape(flog) -> np.ndarray:
    """``MAAPE_t`` for every origin in the log, in log order."""
    _check_complete(flog)
    # summation rounding can lift a mean of pi/2 terms one ulp past pi/2
    return np.minimum(aape(flog.truth, flog.pred).mean(axis=(1, 2)), HALF_PI)


def station_maape(flog) -> np.ndarray:
    """Per-origin, per-station MAAPE ``[origins, stations]`` (mean over horizons)."""
    _check_complete(flog)
    return np.minimum(aape(flog.truth, flog.pred).mean(axis=2), HALF_PI)


def rolling_maape(series, window: int = 7) -> np.ndarray:
    """Trailing mean; entries before the first full window are NaN."""
    x = np.asarray(series, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(x) < window:
        raise ValueError(f"series of length {len(x)} is shorter than the window {window}")
    out = np.full(len(x), np.nan)
    out[window - 1:] = np.lib.stride_tricks.sliding_window_view(x, window).mean(axis=1)
    return out


@dataclass
class MaapeSeries:
    experiment: str
    dates: tuple[dt.date, ...]
    system: np.ndarray
    rolling7: np.ndarray
    station: np.ndarray | None = None

    @classmethod
    def from_log(cls, flog, window: int = 7) -> "MaapeSeries":
        daily = daily_maape(flog)
        roll = rolling_maape(daily, window) if len(daily) >= window else np.full(len(daily), np.nan)
        return cls(flog.experiment, tuple(flog.origins), daily, roll, station_maape(flog))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["experiment", "date", "maape", "rolling7"])
            for d, m, r in zip(self.dates, self.system, self.rolling7):
                w.writerow([self.experiment, d.isoformat(), repr(float(m)),
                            "" if np.isnan(r) else repr(float(r))])

    @classmethod
    def from_csv(cls, path) -> "MaapeSeries":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise DataError(f"{path}: empty MAAPE series")
        return cls(rows[0]["experiment"],
                   tuple(dt.date.fromisoformat(r["date"]) for r in rows),
                   np.array([float(r["maape"]) for r in rows]),
                   np.array([float(r["rolling7"]) if r["rolling7"] else np.nan for r in rows]))


@dataclass
class ClosedStationReport:
    """One row per (station, target day) whose truth is zero.

    ``first_pred`` is the horizon-1 forecast for that day (issued the same
    morning); ``mean_pred`` averages every forecast that targeted it.
    """

    experiment: str
    rows: list[tuple[str, dt.date, float, float, int]]
    threshold: float

    @property
    def n_cells(self) -> int:
        return len(self.rows)

    @property
    def nonzero_fraction(self) -> float:
        if not self.rows:
            return 0.0
        return sum(r[2] > self.threshold for r in self.rows) / len(self.rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["experiment", "station", "date", "pred_h1", "pred_mean", "n_forecasts"])
            for st, d, p1, pm, n in self.rows:
                w.writerow([self.experiment, st, d.isoformat(), repr(p1), repr(pm), n])


def closed_station_report(flog, panel, threshold: float = 1.0) -> ClosedStationReport:
    """Tabulate predictions for every zero-truth (station, day) in the test range.

    A target day qualifies when a horizon-1 forecast exists for it, so each
    test day is counted once.
    """
    _check_complete(flog)
    rows = []
    origin_idx = {d: i for i, d in enumerate(flog.origins)}
    st_idx = [panel.stations.index(s) for s in flog.stations]
    for i, day in enumerate(flog.origins):
        d_panel = panel.day_index(day)
        for s, station in enumerate(flog.stations):
            if panel.counts[st_idx[s], d_panel] != 0:
                continue
            preds = []
            for h in range(7):
                j = origin_idx.get(day - dt.timedelta(days=h))
                if j is not None:
                    preds.append(float(flog.pred[j, s, h]))
            rows.append((station, day, float(flog.pred[i, s, 0]), float(np.mean(preds)),
                         len(preds)))
    return ClosedStationReport(flog.experiment, rows, threshold)
