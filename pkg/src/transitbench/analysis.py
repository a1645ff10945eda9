"""Condition regression: OLS of daily MAAPE on regime dummies.

The design is ``intercept, covid, protest, saturday, holidays,
covid:saturday, covid:holidays``. Standard errors are classical
(homoskedastic) and p-values use the normal approximation.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

COLUMNS = ("intercept", "covid", "protest", "saturday", "holidays",
           "covid:saturday", "covid:holidays")
# two-sided normal critical values for 1%, 5%, 10%
STAR_LEVELS = ((2.5758293035489004, "***"), (1.959963984540054, "**"), (1.6448536269514722, "*"))

DateRange = tuple[dt.date, dt.date]


def _ranges(raw) -> tuple[DateRange, ...]:
    out = []
    for r in raw or ():
        a, b = (dt.date.fromisoformat(x) if isinstance(x, str) else x for x in r)
        if b < a:
            raise ConfigError(f"condition range ends before it starts: {a}..{b}")
        out.append((a, b))
    return tuple(out)


@dataclass(frozen=True)
class ConditionSpec:
    """Inclusive date ranges for each shock regime."""

    covid: tuple[DateRange, ...] = ()
    protest: tuple[DateRange, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "covid", _ranges(self.covid))
        object.__setattr__(self, "protest", _ranges(self.protest))

    @classmethod
    def from_dict(cls, d: dict) -> "ConditionSpec":
        unknown = set(d) - {"covid", "protest"}
        if unknown:
            raise ConfigError(f"unknown condition(s): {sorted(unknown)}")
        return cls(covid=d.get("covid", ()), protest=d.get("protest", ()))

    @staticmethod
    def _inside(day, ranges) -> bool:
        return any(a <= day <= b for a, b in ranges)


@dataclass
class ConditionLabels:
    dates: tuple[dt.date, ...]
    covid: np.ndarray
    protest: np.ndarray
    saturday: np.ndarray
    holidays: np.ndarray

    def design(self) -> np.ndarray:
        n = len(self.dates)
        return np.column_stack([np.ones(n), self.covid, self.protest, self.saturday, self.holidays,
                                self.covid * self.saturday, self.covid * self.holidays])


def label_conditions(dates, spec: ConditionSpec, calendar) -> ConditionLabels:
    """Dummies per day; Sundays count as holidays when the calendar says so."""
    dates = tuple(dates)

    def col(pred):
        return np.array([1.0 if pred(d) else 0.0 for d in dates])

    return ConditionLabels(
        dates,
        col(lambda d: spec._inside(d, spec.covid)),
        col(lambda d: spec._inside(d, spec.protest)),
        col(calendar.is_saturday),
        col(calendar.is_holiday),
    )


def stars(t: float) -> str:
    a = abs(t)
    for crit, mark in STAR_LEVELS:
        if a > crit:
            return mark
    return ""


def normal_two_sided_p(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


@dataclass
class ConditionRegression:
    names: tuple[str, ...]
    coef: np.ndarray
    se: np.ndarray
    r2: float
    adj_r2: float
    n: int
    experiment: str = ""
    rss: float = field(default=0.0, repr=False)

    @property
    def t(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.se > 0, self.coef / self.se, np.sign(self.coef) * np.inf)

    @property
    def p(self) -> np.ndarray:
        return np.array([normal_two_sided_p(t) if np.isfinite(t) else 0.0 for t in self.t])

    @property
    def stars(self) -> tuple[str, ...]:
        return tuple(stars(t) for t in self.t)

    def get(self, name: str) -> tuple[float, float]:
        if name not in self.names:
            raise KeyError(f"coefficient {name!r} not in regression ({', '.join(self.names)})")
        i = self.names.index(name)
        return float(self.coef[i]), float(self.se[i])


def _collinear(X: np.ndarray, names) -> list[str]:
    """Columns that are linear combinations of the columns before them."""
    bad, kept = [], []
    for j in range(X.shape[1]):
        trial = kept + [j]
        if np.linalg.matrix_rank(X[:, trial]) < len(trial):
            bad.append(names[j])
        else:
            kept.append(j)
    return bad


def fit_ols(y, X, names=COLUMNS, experiment: str = "") -> ConditionRegression:
    """Least squares with ``sigma^2 = RSS/(N-k)`` standard errors."""
    if isinstance(X, ConditionLabels):
        X = X.design()
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    names = tuple(names)
    n, k = X.shape
    if len(y) != n or len(names) != k:
        raise DataError("fit_ols: y, X and names disagree in size")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise DataError("fit_ols: non-finite values in the data")
    if n < k + 2:
        raise DataError(f"fit_ols: {n} observations is too few for {k} regressors")
    bad = _collinear(X, names)
    if bad:
        raise DataError(f"design matrix is rank deficient; collinear column(s): {', '.join(bad)}")
    q, r = np.linalg.qr(X)
    beta = np.linalg.solve(r, q.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    tss = float(((y - y.mean()) ** 2).sum())
    sigma2 = rss / (n - k)
    rinv = np.linalg.solve(r, np.eye(k))
    cov = sigma2 * (rinv @ rinv.T)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k)
    return ConditionRegression(names, beta, se, float(r2), float(adj), n, experiment, rss)


def fit_conditions(series, labels: ConditionLabels, experiment: str = "") -> ConditionRegression:
    """Regress a daily MAAPE series on the full condition design."""
    return fit_ols(np.asarray(series, dtype=float), labels.design(), COLUMNS, experiment)


@dataclass(frozen=True)
class Comparison:
    name: str
    diff: float
    z: float
    p: float

    @property
    def significant(self) -> bool:
        return self.p < 0.05


def compare_cells(a: ConditionRegression, b: ConditionRegression, name: str) -> Comparison:
    """Two-sided z-test for equality of one coefficient across independent fits."""
    if a.names != b.names:
        raise DataError("compare_cells: fits use different regressors")
    ca, sa = a.get(name)
    cb, sb = b.get(name)
    diff = ca - cb
    pooled = math.sqrt(sa * sa + sb * sb)
    if pooled == 0:
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    else:
        z = diff / pooled
    p = 1.0 if z == 0 else (0.0 if math.isinf(z) else normal_two_sided_p(z))
    return Comparison(name, diff, z, p)


# ------------------------------------------------------------------- output

def write_regressions_csv(fits, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["experiment", "term", "coef", "se", "t", "p", "stars"])
        for fit in fits:
            for i, name in enumerate(fit.names):
                w.writerow([fit.experiment, name, repr(float(fit.coef[i])),
                            repr(float(fit.se[i])), repr(float(fit.t[i])),
                            repr(float(fit.p[i])), fit.stars[i]])
            for term, value in (("r2", fit.r2), ("adj_r2", fit.adj_r2), ("n", fit.n)):
                w.writerow([fit.experiment, term, repr(float(value)) if term != "n" else value,
                            "", "", "", ""])


def read_regressions_csv(path) -> list[ConditionRegression]:
    by_exp: dict[str, dict] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            d = by_exp.setdefault(row["experiment"], {"names": [], "coef": [], "se": []})
            if row["term"] in ("r2", "adj_r2", "n"):
                d[row["term"]] = float(row["coef"])
            else:
                d["names"].append(row["term"])
                d["coef"].append(float(row["coef"]))
                d["se"].append(float(row["se"]))
    return [ConditionRegression(tuple(d["names"]), np.array(d["coef"]), np.array(d["se"]),
                                d["r2"], d["adj_r2"], int(d["n"]), exp)
            for exp, d in by_exp.items()]


def format_table(fits, width: int = 14) -> str:
    """Fixed-width table: one column per fit, SE in parentheses beneath each coefficient."""
    fits = list(fits)
    names = fits[0].names
    label_w = max(len(n) for n in names + ("R-squared Adj.",)) + 2
    head = " " * label_w + "".join(f.experiment.rjust(width) for f in fits)
    lines = [head, "-" * len(head)]
    for i, name in enumerate(names):
        cells = []
        for f in fits:
            j = f.names.index(name) if name in f.names else None
            cells.append("" if j is None else f"{f.coef[j]:.3f}{f.stars[j]}")
        lines.append(name.ljust(label_w) + "".join(c.rjust(width) for c in cells))
        ses = []
        for f in fits:
            j = f.names.index(name) if name in f.names else None
            ses.append("" if j is None else f"({f.se[j]:.3f})")
        lines.append(" " * label_w + "".join(c.rjust(width) for c in ses))
    lines.append("-" * len(head))
    lines.append("R-squared".ljust(label_w) + "".join(f"{f.r2:.3f}".rjust(width) for f in fits))
    lines.append("R-squared Adj.".ljust(label_w)
                 + "".join(f"{f.adj_r2:.3f}".rjust(width) for f in fits))
    lines.append("N".ljust(label_w) + "".join(str(f.n).rjust(width) for f in fits))
    lines.append("")
    lines.append("*** p<0.01, ** p<0.05, * p<0.1")
    return "\n".join(lines) + "\n"
