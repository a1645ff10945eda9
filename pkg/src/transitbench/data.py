"""Ridership panels: ingestion, calendars, normalization, windowing and
synthetic scenarios with planted regime shifts."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

LOOKBACK = 21
HORIZON = 7
WINDOW_SPAN = LOOKBACK + HORIZON
N_TEMPORAL = 6
YEAR_DAYS = 365.25


@dataclass(frozen=True)
class CalendarSpec:
    holiday_dates: frozenset[dt.date] = frozenset()
    treat_sundays_as_holiday: bool = True

    @classmethod
    def from_file(cls, path, treat_sundays_as_holiday: bool = True) -> "CalendarSpec":
        """Read one ISO date per line; blank lines and ``#`` comments are skipped."""
        dates = set()
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                dates.add(dt.date.fromisoformat(line))
            except ValueError:
                raise DataError(f"{path}:{lineno}: not an ISO date: {raw!r}") from None
        return cls(frozenset(dates), treat_sundays_as_holiday)

    def to_text(self) -> str:
        return "".join(f"{d.isoformat()}\n" for d in sorted(self.holiday_dates))

    def is_saturday(self, day: dt.date) -> bool:
        return day.weekday() == 5

    def is_holiday(self, day: dt.date) -> bool:
        if self.treat_sundays_as_holiday and day.weekday() == 6:
            return True
        return day in self.holiday_dates


@dataclass
class IngestReport:
    rows: int = 0
    imputed_cells: int = 0
    missing_dates: list[dt.date] = field(default_factory=list)

    def summary(self) -> str:
        return (
            f"{self.rows} rows read, {self.imputed_cells} cell"
            f"{'' if self.imputed_cells == 1 else 's'} imputed"
        )


@dataclass(frozen=True, eq=False)
class RidershipPanel:
    """Station x day matrix of daily transaction counts.

    ``counts[s, t]`` is the count of station ``stations[s]`` on ``dates[t]``.
    """

    stations: tuple[str, ...]
    dates: tuple[dt.date, ...]
    counts: np.ndarray
    saturday: np.ndarray
    holiday: np.ndarray
    ingest_report: IngestReport | None = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape != (len(self.stations), len(self.dates)):
            raise DataError(
                f"counts shape {counts.shape} does not match "
                f"{len(self.stations)} stations x {len(self.dates)} dates"
            )
        if len(set(self.stations)) != len(self.stations):
            raise DataError("duplicate station identifiers")
        if counts.size and counts.min() < 0:
            raise DataError("counts must be nonnegative")
        for a, b in zip(self.dates, self.dates[1:]):
            if (b - a).days != 1:
                raise DataError(f"dates not contiguous between {a} and {b}")
        for name in ("saturday", "holiday"):
            flags = np.asarray(getattr(self, name), dtype=bool)
            if flags.shape != (len(self.dates),):
                raise DataError(f"{name} flags must have one entry per date")
            object.__setattr__(self, name, flags)
        counts = counts.astype(np.int64)
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_counts(cls, stations, start: dt.date, counts, calendar: CalendarSpec | None = None,
                    ingest_report: IngestReport | None = None) -> "RidershipPanel":
        calendar = calendar or CalendarSpec()
        counts = np.asarray(counts)
        dates = tuple(start + dt.timedelta(days=i) for i in range(counts.shape[1]))
        return cls(
            stations=tuple(str(s) for s in stations),
            dates=dates,
            counts=counts,
            saturday=np.array([calendar.is_saturday(d) for d in dates], dtype=bool),
            holiday=np.array([calendar.is_holiday(d) for d in dates], dtype=bool),
            ingest_report=ingest_report,
        )

    @property
    def n_stations(self) -> int:
        return len(self.stations)

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def day_index(self, day: dt.date) -> int:
        idx = (day - self.dates[0]).days
        if not 0 <= idx < self.n_days:
            raise DataError(f"{day} outside panel range {self.dates[0]}..{self.dates[-1]}")
        return idx

    def same_as(self, other: "RidershipPanel") -> bool:
        return (
            self.stations == other.stations
            and self.dates == other.dates
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.saturday, other.saturday)
            and np.array_equal(self.holiday, other.holiday)
        )

    def temporal_matrix(self) -> np.ndarray:
        """Temporal feature vectors for every panel day, shape [days, 6]."""
        out = np.empty((self.n_days, N_TEMPORAL))
        for i, day in enumerate(self.dates):
            out[i] = _encode(day, self.saturday[i], self.holiday[i])
        return out


# --------------------------------------------------------------------- CSV I/O

def ingest_csv(path, calendar: CalendarSpec | None = None) -> RidershipPanel:
    """Parse a long-format ``date,station_id,count`` file into a panel.

    Missing (date, station) cells are imputed as zero and counted in
    ``panel.ingest_report``; a gap in the date sequence is filled the same
    way and logged as a warning.
    """
    calendar = calendar or CalendarSpec()
    cells: dict[tuple[dt.date, str], int] = {}
    stations: dict[str, None] = {}
    report = IngestReport()
    if not Path(path).is_file():
        raise DataError(f"ridership file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["date", "station_id", "count"]:
            raise DataError(f"{path}:1: expected header 'date,station_id,count', got {header!r}")
        for row in reader:
            lineno = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            raw_date, station, raw_count = (x.strip() for x in row)
            try:
                day = dt.date.fromisoformat(raw_date)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad date {raw_date!r}") from None
            try:
                count = int(raw_count)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad count {raw_count!r}") from None
            if count < 0:
                raise DataError(f"{path}:{lineno}: negative count {count} for {station} on {day}")
            if not station:
                raise DataError(f"{path}:{lineno}: empty station_id")
            if (day, station) in cells:
                raise DataError(f"{path}:{lineno}: duplicate row for {station} on {day}")
            cells[(day, station)] = count
            stations.setdefault(station)
            report.rows += 1
    if not cells:
        raise DataError(f"{path}: no data rows")

    seen_days = {d for d, _ in cells}
    start, end = min(seen_days), max(seen_days)
    n_days = (end - start).days + 1
    station_list = list(stations)
    col = {s: i for i, s in enumerate(station_list)}
    counts = np.zeros((len(station_list), n_days), dtype=np.int64)
    for (day, station), count in cells.items():
        counts[col[station], (day - start).days] = count
    report.imputed_cells = len(station_list) * n_days - len(cells)
    report.missing_dates = [
        start + dt.timedelta(days=i) for i in range(n_days)
        if start + dt.timedelta(days=i) not in seen_days
    ]
    if report.missing_dates:
        log.warning("%s: %d dates absent from file were filled with zeros",
                    path, len(report.missing_dates))
    if report.imputed_cells:
        log.info("%s: %s", path, report.summary())
    return RidershipPanel.from_counts(station_list, start, counts, calendar, ingest_report=report)


def write_csv(panel: RidershipPanel, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "station_id", "count"])
        for t, day in enumerate(panel.dates):
            iso = day.isoformat()
            for s, station in enumerate(panel.stations):
                w.writerow([iso, station, int(panel.counts[s, t])])


# --------------------------------------------------------------- normalization

@dataclass(frozen=True, eq=False)
class NormalizationState:
    """Per-station divide-by-training-max scaling; zero maps to zero."""

    scale: np.ndarray
    flagged: tuple[int, ...] = ()

    def normalize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x / self.scale.reshape((-1,) + (1,) * (x.ndim - 1))

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x * self.scale.reshape((-1,) + (1,) * (x.ndim - 1))

    def station(self, s: int) -> "NormalizationState":
        return NormalizationState(self.scale[s:s + 1], (0,) if s in self.flagged else ())


def fit_normalization(panel: RidershipPanel, training_range: tuple[int, int]) -> NormalizationState:
    """Scale each station by its maximum count over ``[start, stop)`` day indices.

    Stations whose training counts are all zero get scale 1 and are listed in
    ``flagged``.
    """
    start, stop = training_range
    if not 0 <= start < stop <= panel.n_days:
        raise DataError(f"empty or out-of-range training range {training_range} for "
                        f"{panel.n_days}-day panel")
    scale = panel.counts[:, start:stop].max(axis=1).astype(float)
    flagged = tuple(int(i) for i in np.flatnonzero(scale == 0))
    if flagged:
        log.warning("stations with all-zero training data get unit scale: %s",
                    [panel.stations[i] for i in flagged])
    scale[scale == 0] = 1.0
    return NormalizationState(scale, flagged)


# -------------------------------------------------------------------- features

def _encode(day: dt.date, saturday: bool, holiday: bool) -> np.ndarray:
    week_phase = 2 * math.pi * day.weekday() / 7
    year_phase = 2 * math.pi * day.timetuple().tm_yday / YEAR_DAYS
    return np.array([
        float(saturday), float(holiday),
        math.sin(week_phase), math.cos(week_phase),
        math.sin(year_phase), math.cos(year_phase),
    ])


def temporal_features(day: dt.date, calendar: CalendarSpec) -> np.ndarray:
    """``[is_saturday, is_holiday, sin/cos weekly phase, sin/cos yearly phase]``.

    Day-of-week counts from Monday = 0, day-of-year from 1 Jan = 1.
    """
    return _encode(day, calendar.is_saturday(day), calendar.is_holiday(day))


# ------------------------------------------------------------------- windowing

@dataclass(frozen=True)
class SupervisedWindow:
    origin_day: dt.date
    lookback: np.ndarray           # [stations_in, 21]
    temporal_features: np.ndarray  # [7, 6], one row per target day
    target: np.ndarray             # [stations_out, 7]


@dataclass(frozen=True, eq=False)
class WindowBatch(Sequence):
    """A stack of supervised windows sharing one station set.

    ``origins`` are day indices into the source panel.
    """

    origins: np.ndarray    # [n]
    lookback: np.ndarray   # [n, stations, 21]
    features: np.ndarray   # [n, 7, 6]
    target: np.ndarray     # [n, stations, 7]
    dates: tuple[dt.date, ...] = ()

    def __len__(self) -> int:
        return len(self.origins)

    def __getitem__(self, i):
        if isinstance(i, slice) or isinstance(i, np.ndarray):
            return self.take(np.arange(len(self))[i] if isinstance(i, slice) else i)
        return SupervisedWindow(
            origin_day=self.dates[int(self.origins[i])] if self.dates else None,
            lookback=self.lookback[i],
            temporal_features=self.features[i],
            target=self.target[i],
        )

    def take(self, idx) -> "WindowBatch":
        idx = np.asarray(idx)
        return WindowBatch(self.origins[idx], self.lookback[idx], self.features[idx],
                           self.target[idx], self.dates)

    @property
    def n_stations(self) -> int:
        return self.lookback.shape[1]

    @property
    def flat_features(self) -> np.ndarray:
        return self.features.reshape(len(self), -1)


def valid_origins(n_days: int, start: int = LOOKBACK, stop: int | None = None,
                  stride: int = 1) -> np.ndarray:
    """Origin day indices whose lookback and 7-day target both fit in the panel.

    ``start``/``stop`` further restrict origins to ``[start, stop)``.
    """
    last = n_days - HORIZON  # inclusive
    if stop is not None:
        last = min(last, stop - 1)
    first = max(start, LOOKBACK)
    if last < first:
        return np.zeros(0, dtype=np.int64)
    return np.arange(first, last + 1, stride, dtype=np.int64)


def build_windows(normalized: np.ndarray, temporal: np.ndarray, origins: np.ndarray,
                  dates: tuple[dt.date, ...] = ()) -> WindowBatch:
    """Slice windows from an already-normalized ``[stations, days]`` matrix.

    Target blocks are sliced only when they fit; callers forecasting at the
    panel edge get NaN targets for days past the end.
    """
    n_st, n_days = normalized.shape
    origins = np.asarray(origins, dtype=np.int64)
    lb_idx = origins[:, None] + np.arange(-LOOKBACK, 0)
    tg_idx = origins[:, None] + np.arange(HORIZON)
    if (lb_idx < 0).any():
        raise DataError("origin too early: lookback would start before the panel")
    lookback = np.transpose(normalized[:, lb_idx], (1, 0, 2))
    feat_idx = np.minimum(tg_idx, n_days - 1)
    features = temporal[feat_idx]
    padded = np.concatenate([normalized, np.full((n_st, HORIZON), np.nan)], axis=1)
    target = np.transpose(padded[:, tg_idx], (1, 0, 2))
    return WindowBatch(origins, np.ascontiguousarray(lookback), np.ascontiguousarray(features),
                       np.ascontiguousarray(target), dates)


def make_windows(panel: RidershipPanel, norm: NormalizationState, output_design: str = "multi",
                 stride: int = 1, origins: np.ndarray | None = None):
    """Supervised windows: days ``[o-21, o-1]`` predict days ``[o, o+6]``.

    Returns one :class:`WindowBatch` for the multi-output design, or a list
    with one batch per station for the single-output design.
    """
    if panel.n_days < WINDOW_SPAN:
        raise DataError(f"panel has {panel.n_days} days; windowing needs at least "
                        f"{WINDOW_SPAN} (21 lookback + 7 target)")
    if origins is None:
        origins = valid_origins(panel.n_days, stride=stride)
    normalized = norm.normalize(panel.counts)
    temporal = panel.temporal_matrix()
    if output_design == "multi":
        return build_windows(normalized, temporal, origins, panel.dates)
    if output_design == "single":
        return [build_windows(normalized[s:s + 1], temporal, origins, panel.dates)
                for s in range(panel.n_stations)]
    raise DataError(f"unknown output design {output_design!r}")


# ------------------------------------------------------------------- synthetic

@dataclass(frozen=True)
class Shock:
    start_day: int
    duration: int | None = None  # None: open-ended
    level_multiplier: float = 1.0
    closed_stations: tuple[int, ...] = ()

    def active(self, n_days: int) -> np.ndarray:
        mask = np.zeros(n_days, dtype=bool)
        stop = n_days if self.duration is None else min(n_days, self.start_day + self.duration)
        mask[max(self.start_day, 0):stop] = True
        return mask


@dataclass(frozen=True)
class SyntheticScenario:
    n_stations: int = 20
    n_days: int = 1460
    start_date: dt.date = dt.date(2015, 8, 1)
    base_levels: tuple[float, ...] | None = None
    base_range: tuple[float, float] = (2000.0, 20000.0)
    weekly_profile: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.05, 0.7, 0.35)
    yearly_amplitude: float = 0.1
    noise_sigma: float = 0.05
    holiday_days: tuple[int, ...] = ()
    holiday_multiplier: float = 0.45
    shocks: tuple[Shock, ...] = ()

    def __post_init__(self):
        if len(self.weekly_profile) != 7:
            raise DataError("weekly_profile needs 7 multipliers (Monday first)")
        if min(self.weekly_profile) < 0 or self.holiday_multiplier < 0:
            raise DataError("multipliers must be nonnegative")
        for shock in self.shocks:
            if shock.level_multiplier < 0:
                raise DataError("shock level_multiplier must be nonnegative")
            bad = [s for s in shock.closed_stations if not 0 <= s < self.n_stations]
            if bad:
                raise DataError(f"closed station index out of range: {bad}")
        if self.base_levels is not None and len(self.base_levels) != self.n_stations:
            raise DataError("base_levels must list one level per station")

    def calendar(self) -> CalendarSpec:
        days = frozenset(self.start_date + dt.timedelta(days=i) for i in self.holiday_days)
        return CalendarSpec(days, treat_sundays_as_holiday=True)


def generate_synthetic(scenario: SyntheticScenario, seed: int = 0) -> RidershipPanel:
    """Draw a panel from the scenario; identical output for identical seed.

    ``count = round(base * weekly[dow] * (1 + amp*sin(2*pi*doy/365.25))
    * holiday * shocks * exp(sigma*z))``, floored at zero, with closed stations
    forced to exactly zero while their shock is active.
    """
    rng = np.random.default_rng(seed)
    S, D = scenario.n_stations, scenario.n_days
    if scenario.base_levels is not None:
        base = np.asarray(scenario.base_levels, dtype=float)
    else:
        lo, hi = scenario.base_range
        base = np.exp(rng.uniform(math.log(lo), math.log(hi), size=S))
    z = rng.standard_normal((S, D))

    dates = [scenario.start_date + dt.timedelta(days=i) for i in range(D)]
    weekly = np.array([scenario.weekly_profile[d.weekday()] for d in dates])
    doy = np.array([d.timetuple().tm_yday for d in dates], dtype=float)
    yearly = 1.0 + scenario.yearly_amplitude * np.sin(2 * np.pi * doy / YEAR_DAYS)
    holiday = np.ones(D)
    idx = [h for h in scenario.holiday_days if 0 <= h < D]
    holiday[idx] = scenario.holiday_multiplier

    level = np.ones((S, D))
    closed = np.zeros((S, D), dtype=bool)
    for shock in scenario.shocks:
        active = shock.active(D)
        level[:, active] *= shock.level_multiplier
        for s in shock.closed_stations:
            closed[s, active] = True

    mean = base[:, None] * (weekly * yearly * holiday)[None, :] * level
    noise = np.exp(scenario.noise_sigma * z) if scenario.noise_sigma > 0 else 1.0
    counts = np.maximum(np.round(mean * noise), 0).astype(np.int64)
    counts[closed] = 0
    stations = [f"S{i:03d}" for i in range(S)]
    return RidershipPanel.from_counts(stations, scenario.start_date, counts, scenario.calendar())
