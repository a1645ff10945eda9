import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from transitbench.analysis import (COLUMNS, ConditionSpec, compare_cells, fit_conditions, fit_ols,
                                   format_table, label_conditions, read_regressions_csv, stars,
                                   write_regressions_csv)
from transitbench.data import CalendarSpec
from transitbench.errors import ConfigError, DataError

D0 = dt.date(2020, 1, 6)  # a Monday


def random_design(rng, n):
    covid = (np.arange(n) >= n // 2).astype(float)
    protest = ((np.arange(n) >= n // 5) & (np.arange(n) < n // 5 + 40)).astype(float)
    sat = (np.arange(n) % 7 == 5).astype(float)
    hol = ((np.arange(n) % 7 == 6) | (rng.random(n) < 0.02)).astype(float)
    return np.column_stack([np.ones(n), covid, protest, sat, hol, covid * sat, covid * hol])


def test_exact_linear_data_recovered():
    rng = np.random.default_rng(0)
    X = random_design(rng, 300)
    beta = np.array([0.1, 0.4, 0.2, 0.0, 0.3, -0.1, -0.2])
    fit = fit_ols(X @ beta, X)
    assert np.allclose(fit.coef, beta, atol=1e-12)
    assert np.all(fit.se < 1e-12)
    assert fit.r2 == pytest.approx(1.0)


def test_se_matches_textbook_formula():
    rng = np.random.default_rng(1)
    X = random_design(rng, 200)
    y = X @ np.arange(7) * 0.01 + rng.normal(0, 0.05, 200)
    fit = fit_ols(y, X)
    b = np.linalg.inv(X.T @ X) @ X.T @ y
    r = y - X @ b
    cov = (r @ r) / (200 - 7) * np.linalg.inv(X.T @ X)
    assert np.allclose(fit.coef, b, atol=1e-10)
    assert np.allclose(fit.se, np.sqrt(np.diag(cov)), rtol=1e-8)
    r2 = 1 - (r @ r) / ((y - y.mean()) ** 2).sum()
    assert fit.r2 == pytest.approx(r2)
    assert fit.adj_r2 == pytest.approx(1 - (1 - r2) * 199 / 193)


@pytest.mark.parametrize("t,mark", [
    (0.059 / 0.034, "*"), (1.6448, ""), (1.65, "*"), (-2.0, "**"), (2.58, "***"), (0.0, ""),
])
def test_star_thresholds(t, mark):
    assert stars(t) == mark


@given(st.floats(-50, 50))
def test_stars_are_monotone_in_abs_t(t):
    assert len(stars(t)) <= len(stars(t * 1.5 if abs(t) > 0 else 1.0))


def test_monte_carlo_coverage_smoke():
    """Few seeds here; the full 100-seed run lives in the acceptance suite."""
    beta = np.array([0.1, 0.4, 0.2, 0.0, 0.3, -0.1, -0.2])
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = random_design(rng, 990)
        fit = fit_ols(X @ beta + rng.normal(0, 0.05, 990), X)
        hits += bool(np.all(np.abs(fit.coef - beta) <= 3 * fit.se))
    assert hits >= 18


def test_rank_deficiency_names_column():
    rng = np.random.default_rng(2)
    X = random_design(rng, 100)
    X[:, 5] = X[:, 1]
    with pytest.raises(DataError, match="covid:saturday"):
        fit_ols(rng.random(100), X)
    with pytest.raises(DataError, match="too few"):
        fit_ols(np.ones(8), random_design(rng, 8))


@given(st.integers(0, 10_000), st.floats(-5, 5), st.floats(0.1, 10))
def test_affine_invariance(seed, shift, scale):
    rng = np.random.default_rng(seed)
    X = random_design(rng, 120)
    y = rng.random(120)
    a = fit_ols(y, X)
    b = fit_ols(scale * y + shift, X)
    assert b.coef[0] == pytest.approx(scale * a.coef[0] + shift, abs=1e-9)
    assert np.allclose(b.coef[1:], scale * a.coef[1:], atol=1e-9)
    assert np.allclose(b.t[1:], a.t[1:], rtol=1e-6, atol=1e-8)


def _fit(coef, se, name="x"):
    from transitbench.analysis import ConditionRegression
    return ConditionRegression(COLUMNS, np.array(coef, float), np.array(se, float), 0.5, 0.4, 100, name)


def test_compare_cells_examples():
    a = _fit([0, 0.10, 0, 0, 0, 0, 0], [1] + [0.03] * 6)
    b = _fit([0, 0.20, 0, 0, 0, 0, 0], [1] + [0.04] * 6)
    c = compare_cells(a, b, "covid")
    assert c.diff == pytest.approx(-0.1)
    assert c.z == pytest.approx(-2.0)
    assert c.p == pytest.approx(0.0455, abs=1e-4)
    assert c.significant
    same = compare_cells(a, a, "covid")
    assert same.z == 0 and same.p == 1.0
    with pytest.raises(KeyError, match="weekend"):
        compare_cells(a, b, "weekend")


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.001, 1), st.floats(0.001, 1))
def test_compare_cells_antisymmetric(ca, cb, sa, sb):
    a = _fit([0, ca, 0, 0, 0, 0, 0], [1] * 7)
    a.se[1] = sa
    b = _fit([0, cb, 0, 0, 0, 0, 0], [1] * 7)
    b.se[1] = sb
    ab, ba = compare_cells(a, b, "covid"), compare_cells(b, a, "covid")
    assert ab.z == -ba.z and ab.p == pytest.approx(ba.p)
    assert 0 <= ab.p <= 1


def test_labels_count_days():
    dates = [D0 + dt.timedelta(days=i) for i in range(28)]  # 4 whole weeks
    cal = CalendarSpec(frozenset({D0 + dt.timedelta(days=2)}))
    spec = ConditionSpec.from_dict({"covid": [["2020-01-20", "2020-02-29"]],
                                    "protest": [["2020-01-06", "2020-01-08"]]})
    lab = label_conditions(dates, spec, cal)
    assert lab.covid.sum() == 14
    assert lab.protest.sum() == 3
    assert lab.saturday.sum() == 4
    assert lab.holidays.sum() == 5  # four Sundays plus one listed date
    X = lab.design()
    assert X[:, 5].sum() == 2 and X[:, 6].sum() == 2
    no_sunday = label_conditions(dates, spec, CalendarSpec(treat_sundays_as_holiday=False))
    assert no_sunday.holidays.sum() == 0


def test_condition_spec_validation():
    with pytest.raises(ConfigError, match="weather"):
        ConditionSpec.from_dict({"weather": []})
    with pytest.raises(ConfigError, match="ends before"):
        ConditionSpec(covid=[("2020-02-01", "2020-01-01")])


def test_csv_round_trip_and_table(tmp_path):
    rng = np.random.default_rng(3)
    dates = [D0 + dt.timedelta(days=i) for i in range(200)]
    spec = ConditionSpec(covid=[(dates[100], dates[-1])], protest=[(dates[30], dates[60])])
    lab = label_conditions(dates, spec, CalendarSpec(frozenset({dates[10], dates[150]})))
    fits = [fit_conditions(rng.random(200), lab, f"cell{i}") for i in range(2)]
    write_regressions_csv(fits, tmp_path / "r.csv")
    back = read_regressions_csv(tmp_path / "r.csv")
    for f, g in zip(fits, back):
        assert g.experiment == f.experiment and g.n == 200
        assert np.array_equal(g.coef, f.coef) and np.array_equal(g.se, f.se)
        assert g.stars == f.stars
    table = format_table(fits)
    assert "cell0" in table and "covid:holidays" in table and table.count("(") >= 14
