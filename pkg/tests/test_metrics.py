import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import make_panel
from transitbench.errors import DataError
from transitbench.metrics import (HALF_PI, MaapeSeries, aape, closed_station_report, daily_maape,
                                  rolling_maape, system_maape)
from transitbench.runner import ForecastLog

D0 = dt.date(2020, 1, 6)


def make_log(pred, truth, start=D0):
    pred = np.asarray(pred, dtype=float)
    origins = tuple(start + dt.timedelta(days=i) for i in range(pred.shape[0]))
    stations = tuple(f"s{i}" for i in range(pred.shape[1]))
    return ForecastLog("x", stations, origins, pred, np.asarray(truth, dtype=float))


def oracle(truth, pred):
    """Straight double loop over stations and horizons."""
    total, n = 0.0, 0
    for s in range(len(truth)):
        for h in range(len(truth[s])):
            y, f = float(truth[s][h]), float(pred[s][h])
            total += (0.0 if f == 0 else math.pi / 2) if y == 0 else math.atan(abs(f - y) / y)
            n += 1
    return total / n


@pytest.mark.parametrize("y,f,expect", [
    (100, 110, math.atan(0.1)),
    (10, 0, math.pi / 4),
    (0, 0, 0.0),
    (0, 5, math.pi / 2),
    (7, 7, 0.0),
    (1, 1e9, math.atan(1e9 - 1)),
])
def test_aape_examples(y, f, expect):
    assert aape(y, f) == pytest.approx(expect, abs=1e-15)


def test_aape_rejects_bad_input():
    with pytest.raises(DataError):
        aape(-1, 2)
    with pytest.raises(DataError):
        aape(1, float("nan"))


counts = hnp.arrays(float, st.tuples(st.integers(1, 6), st.just(7)),
                    elements=st.one_of(st.just(0.0), st.floats(0, 1e6, allow_subnormal=False)))


@given(counts, st.data())
def test_system_maape_matches_loop(truth, data):
    pred = data.draw(hnp.arrays(float, truth.shape,
                                elements=st.one_of(st.just(0.0), st.floats(0, 1e6, allow_subnormal=False))))
    flog = make_log(pred[None], truth[None])
    got = system_maape(flog, D0)
    assert abs(got - oracle(truth, pred)) <= 1e-12
    assert 0.0 <= got <= HALF_PI
    assert 0.0 <= daily_maape(flog)[0] <= HALF_PI


@given(counts)
def test_perfect_forecast_scores_zero(truth):
    assert system_maape(make_log(truth[None], truth[None]), D0) == 0.0


@given(st.floats(1, 1e6), st.floats(0, 1e6), st.floats(0.01, 100))
def test_aape_is_scale_invariant(y, f, k):
    assert aape(k * y, k * f) == pytest.approx(aape(y, f), abs=1e-12)


def test_missing_records_are_listed():
    pred = np.ones((2, 2, 7))
    pred[1, 0, 3] = np.nan
    flog = make_log(pred, np.ones((2, 2, 7)))
    with pytest.raises(DataError, match=r"\(2020-01-07, s0, h4\)"):
        daily_maape(flog)
    with pytest.raises(DataError, match="no forecasts"):
        system_maape(flog, dt.date(2021, 1, 1))


def test_rolling_examples():
    r = rolling_maape([1, 2, 3, 4, 5, 6, 7, 8], 7)
    assert np.isnan(r[:6]).all()
    assert r[6:].tolist() == [4.0, 5.0]
    with pytest.raises(ValueError):
        rolling_maape([1, 2, 3], 7)


@given(hnp.arrays(float, st.integers(7, 60), elements=st.floats(0, HALF_PI)))
def test_rolling_is_trailing_mean(x):
    r = rolling_maape(x)
    for t in range(6, len(x)):
        assert r[t] == pytest.approx(x[t - 6:t + 1].mean(), abs=1e-12)


def test_series_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    flog = make_log(rng.random((10, 3, 7)) * 10, rng.integers(0, 10, (10, 3, 7)))
    ser = MaapeSeries.from_log(flog)
    ser.to_csv(tmp_path / "m.csv")
    back = MaapeSeries.from_csv(tmp_path / "m.csv")
    assert back.dates == ser.dates
    assert np.array_equal(back.system, ser.system)
    assert np.array_equal(back.rolling7, ser.rolling7, equal_nan=True)


def test_closed_station_report_counts_each_day_once(tmp_path):
    counts = np.full((2, 40), 50)
    counts[1, 20:25] = 0  # five closed days at s1
    panel = make_panel(counts)
    origins = range(15, 30)
    pred = np.full((len(origins), 2, 7), 40.0)
    truth = np.stack([counts[:, o:o + 7] for o in origins]).astype(float)
    pred[20 - 15, 1, 0] = 0.0  # horizon-1 forecast for the first closed day is exactly zero
    flog = make_log(pred, truth, panel.dates[15])
    rep = closed_station_report(flog, panel)
    assert rep.n_cells == 5
    assert [r[1] for r in rep.rows] == list(panel.dates[20:25])
    assert all(r[0] == "s1" for r in rep.rows)
    # day 20 is only reachable from origins 15..20, the rest from a full week of origins
    assert [r[4] for r in rep.rows] == [6, 7, 7, 7, 7]
    assert rep.rows[0][3] == pytest.approx(40.0 * 5 / 6)
    assert rep.nonzero_fraction == pytest.approx(4 / 5)
    rep.to_csv(tmp_path / "c.csv")
    assert len((tmp_path / "c.csv").read_text().splitlines()) == 6
