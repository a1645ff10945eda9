"""Univariate ARIMA / SARIMA by conditional sum of squares.

Parameterisation (``B`` is the backshift operator, ``w`` the differenced
series, ``mu`` the constant)::

    (1 - sum phi_i B^i)(1 - sum Phi_j B^(j*m)) (w_t - mu)
        = (1 + sum theta_i B^i)(1 + sum Theta_j B^(j*m)) e_t

With ``d + D == 0`` the constant is the series mean; with one difference it
is a drift. Residuals before the first full AR lag are conditioned away (set
to zero), which is what makes the fit a conditional sum of squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .errors import ConvergenceError, DataError, ModelError

KPSS_CRIT_5PCT = 0.463
ROOT_MARGIN = 1e-6
MAX_ITER = 200
GTOL = 1e-6
MAX_MODELS = 50
SEARCH_ROOT_MARGIN = 0.01
CANCEL_TOL = 0.1


@dataclass(frozen=True)
class ArimaOrder:
    p: int = 0
    d: int = 0
    q: int = 0
    P: int = 0
    D: int = 0
    Q: int = 0
    m: int = 0
    with_constant: bool = True

    def __post_init__(self):
        for name, cap in (("p", 5), ("q", 5), ("d", 2), ("P", 2), ("Q", 2), ("D", 1)):
            v = getattr(self, name)
            if not 0 <= v <= cap:
                raise ModelError(f"order component {name}={v} outside [0, {cap}]")
        if self.m < 0 or self.m == 1:
            raise ModelError(f"seasonal period m={self.m}: use 0 (non-seasonal) or >= 2")
        if self.m == 0 and (self.P or self.D or self.Q):
            raise ModelError("seasonal terms need a period m >= 2")

    @property
    def n_coef(self) -> int:
        return self.p + self.q + self.P + self.Q

    @property
    def n_params(self) -> int:
        return self.n_coef + int(self.with_constant)

    @property
    def seasonal(self) -> bool:
        return self.m >= 2

    def label(self) -> str:
        s = f"({self.p},{self.d},{self.q})"
        if self.seasonal:
            s += f"({self.P},{self.D},{self.Q})[{self.m}]"
        return s + ("+c" if self.with_constant else "")


@dataclass(frozen=True, eq=False)
class ArimaFit:
    order: ArimaOrder
    ar: np.ndarray
    ma: np.ndarray
    seasonal_ar: np.ndarray
    seasonal_ma: np.ndarray
    constant: float
    sigma2: float
    aic: float
    n_obs: int
    series: np.ndarray | None = field(default=None, repr=False)
    search_log: tuple = field(default=(), repr=False)
    # optimizer curvature at the solution; seeds the next warm-started update
    inv_hessian: np.ndarray | None = field(default=None, repr=False)

    @property
    def params(self) -> np.ndarray:
        parts = [self.ar, self.ma, self.seasonal_ar, self.seasonal_ma]
        if self.order.with_constant:
            parts.append([self.constant])
        return np.concatenate([np.asarray(x, dtype=float) for x in parts])

    def to_text(self) -> str:
        """Self-describing text record; floats use round-trip ``repr``."""
        o = self.order

        def vec(xs):
            return " ".join(repr(float(x)) for x in xs)

        return "\n".join([
            "arima-fit v1",
            f"order {o.p} {o.d} {o.q} {o.P} {o.D} {o.Q} {o.m} {int(o.with_constant)}",
            f"ar {vec(self.ar)}".rstrip(),
            f"ma {vec(self.ma)}".rstrip(),
            f"sar {vec(self.seasonal_ar)}".rstrip(),
            f"sma {vec(self.seasonal_ma)}".rstrip(),
            f"constant {self.constant!r}",
            f"sigma2 {self.sigma2!r}",
            f"aic {self.aic!r}",
            f"n_obs {self.n_obs}",
        ] + ([f"hess {vec(np.ravel(self.inv_hessian))}".rstrip()]
             if self.inv_hessian is not None else [])) + "\n"

    @classmethod
    def from_text(cls, text: str, series=None) -> "ArimaFit":
        fields = {}
        lines = text.strip().splitlines()
        if not lines or lines[0].strip() != "arima-fit v1":
            raise DataError("not an arima-fit v1 record")
        for line in lines[1:]:
            key, _, rest = line.partition(" ")
            fields[key] = rest.split()
        o = [int(x) for x in fields["order"]]
        order = ArimaOrder(*o[:7], with_constant=bool(o[7]))
        arr = lambda k: np.array([float(x) for x in fields.get(k, [])])  # noqa: E731
        return cls(
            order=order, ar=arr("ar"), ma=arr("ma"), seasonal_ar=arr("sar"),
            seasonal_ma=arr("sma"), constant=float(fields["constant"][0]),
            sigma2=float(fields["sigma2"][0]), aic=float(fields["aic"][0]),
            n_obs=int(fields["n_obs"][0]),
            series=None if series is None else np.asarray(series, dtype=float),
            inv_hessian=(arr("hess").reshape(order.n_params, order.n_params)
                         if "hess" in fields else None),
        )


# ----------------------------------------------------------------- differencing

def _diff_poly(d: int, D: int, m: int) -> np.ndarray:
    """Coefficients of ``(1-B)^d (1-B^m)^D`` in increasing powers of B."""
    poly = np.array([1], dtype=np.int64)
    for _ in range(d):
        poly = np.convolve(poly, [1, -1])
    if D:
        seas = np.zeros(m + 1, dtype=np.int64)
        seas[0], seas[m] = 1, -1
        for _ in range(D):
            poly = np.convolve(poly, seas)
    return poly


def difference(series, d: int = 0, D: int = 0, m: int = 0) -> np.ndarray:
    """Apply ``(1-B)^d (1-B^m)^D``; output is ``d + D*m`` shorter.

    Integer input stays integer (exact arithmetic).
    """
    x = np.asarray(series)
    if D and m < 2:
        raise DataError("seasonal differencing needs period m >= 2")
    lag = d + D * m
    if len(x) <= lag:
        raise DataError(f"series of length {len(x)} too short to difference with d={d}, "
                        f"D={D}, m={m}")
    if lag == 0:
        return x.copy()
    return np.convolve(x, _diff_poly(d, D, m), mode="valid")


# ------------------------------------------------------------------------ KPSS

@dataclass(frozen=True)
class KpssResult:
    statistic: float
    lags: int
    nonstationary: bool


def kpss_stationarity(series) -> KpssResult:
    """KPSS level-stationarity test with a Bartlett-kernel long-run variance.

    Bandwidth ``floor(4*(n/100)**0.25)``; rejects (nonstationary) when the
    statistic exceeds 0.463, the 5% critical value.
    """
    y = np.asarray(series, dtype=float)
    n = len(y)
    if n < 12:
        raise DataError(f"KPSS needs at least 12 observations, got {n}")
    e = y - y.mean()
    lags = int(math.floor(4 * (n / 100) ** 0.25))
    s2 = e @ e / n
    for lag in range(1, lags + 1):
        s2 += 2 * (1 - lag / (lags + 1)) * (e[lag:] @ e[:-lag]) / n
    if s2 <= 1e-14 * max(1.0, float(np.abs(y).max()) ** 2):
        return KpssResult(0.0, lags, False)
    stat = float(np.sum(np.cumsum(e) ** 2) / (n * n * s2))
    return KpssResult(stat, lags, stat > KPSS_CRIT_5PCT)


# ----------------------------------------------------------------- CSS kernel

def _unpack(order: ArimaOrder, params: np.ndarray):
    i = 0
    out = []
    for k in (order.p, order.q, order.P, order.Q):
        out.append(params[i:i + k])
        i += k
    const = params[i] if order.with_constant else 0.0
    return (*out, const)


def _lag_poly(coef: np.ndarray, step: int, sign: float) -> np.ndarray:
    poly = np.zeros(len(coef) * step + 1)
    poly[0] = 1.0
    poly[step::step] = sign * np.asarray(coef)
    return poly


def _full_polys(order: ArimaOrder, params: np.ndarray):
    ar, ma, sar, sma, const = _unpack(order, params)
    m = max(order.m, 1)
    ar_poly = np.convolve(_lag_poly(ar, 1, -1.0), _lag_poly(sar, m, -1.0))
    ma_poly = np.convolve(_lag_poly(ma, 1, 1.0), _lag_poly(sma, m, 1.0))
    return ar_poly, ma_poly, const


def _roots_ok(poly: np.ndarray) -> bool:
    nz = np.flatnonzero(np.abs(poly) > 0)
    deg = nz[-1] if len(nz) else 0
    if deg == 0:
        return True
    if deg == 1:
        return abs(poly[1]) < 1.0 / (1.0 + ROOT_MARGIN)
    roots = np.roots(poly[:deg + 1][::-1])
    return bool(np.all(np.abs(roots) > 1.0 + ROOT_MARGIN))


def _admissible(order: ArimaOrder, params: np.ndarray) -> bool:
    ar, ma, sar, sma, _ = _unpack(order, params)
    m = max(order.m, 1)
    # Roots of a product are the union of the factors' roots.
    return (_roots_ok(_lag_poly(ar, 1, -1.0)) and _roots_ok(_lag_poly(sar, m, -1.0))
            and _roots_ok(_lag_poly(ma, 1, 1.0)) and _roots_ok(_lag_poly(sma, m, 1.0)))


def css_residuals(w: np.ndarray, order: ArimaOrder, params: np.ndarray) -> np.ndarray:
    """Innovations for ``t >= p + P*m`` given the differenced series ``w``."""
    ar_poly, ma_poly, const = _full_polys(order, params)
    x = w - const
    u = np.convolve(x, ar_poly, mode="valid")
    if len(ma_poly) == 1:
        return u
    return lfilter([1.0], ma_poly, u)


def _css_objective(w: np.ndarray, order: ArimaOrder):
    def f(params):
        if not _admissible(order, params):
            return math.inf
        e = css_residuals(w, order, params)
        sse = float(e @ e)
        if not np.isfinite(sse) or sse <= 0:
            return math.inf if not np.isfinite(sse) else -math.inf
        return math.log(sse / len(e))
    return f


# ------------------------------------------------------------------ optimizer

@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    converged: bool
    n_iter: int
    trace: list[float]
    H: np.ndarray | None = None


def _num_grad(f, x: np.ndarray, fx: float) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(len(x)):
        h = 1e-6 * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp, fm = f(xp), f(xm)
        if math.isfinite(fp) and math.isfinite(fm):
            g[i] = (fp - fm) / (2 * h)
        elif math.isfinite(fp):
            g[i] = (fp - fx) / h
        elif math.isfinite(fm):
            g[i] = (fx - fm) / h
        else:
            g[i] = 0.0
    return g


def bfgs(f, x0, max_iter: int = MAX_ITER, gtol: float = GTOL, H0=None) -> OptimResult:
    """Quasi-Newton minimisation with numerical gradients.

    Steps are accepted only under the Armijo condition, so the recorded
    objective trace is non-increasing. ``H0`` seeds the inverse-Hessian
    estimate (identity by default); the final estimate is returned in ``H``. Returns when the gradient norm drops
    below ``gtol`` or no descent step can be found; raises
    :class:`ConvergenceError` (carrying the best point) after ``max_iter``.
    """
    x = np.asarray(x0, dtype=float).copy()
    fx = f(x)
    if not math.isfinite(fx):
        raise ModelError("objective is not finite at the starting point")
    trace = [fx]
    n = len(x)
    if n == 0:
        return OptimResult(x, fx, True, 0, trace)
    H = np.eye(n) if H0 is None else np.array(H0, dtype=float)
    g = _num_grad(f, x, fx)
    for it in range(1, max_iter + 1):
        if np.linalg.norm(g) < gtol:
            return OptimResult(x, fx, True, it - 1, trace, H)
        direction = -H @ g
        slope = g @ direction
        if slope >= 0:
            H = np.eye(n)
            direction = -g
            slope = -(g @ g)
        alpha = 1.0
        accepted = False
        for _ in range(50):
            x_new = x + alpha * direction
            f_new = f(x_new)
            if math.isfinite(f_new) and f_new <= fx + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted or f_new >= fx:
            if not np.allclose(H, np.eye(n)):
                H = np.eye(n)  # retry once along steepest descent
                continue
            return OptimResult(x, fx, True, it - 1, trace, H)
        g_new = _num_grad(f, x_new, f_new)
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-12:
            rho = 1.0 / sy
            eye = np.eye(n)
            H = (eye - rho * np.outer(s, y)) @ H @ (eye - rho * np.outer(y, s)) + rho * np.outer(s, s)
        x, fx, g = x_new, f_new, g_new
        trace.append(fx)
    raise ConvergenceError(f"BFGS did not converge in {max_iter} iterations", best=x, best_value=fx)


# ------------------------------------------------------------------ estimation

def min_length(order: ArimaOrder) -> int:
    return 3 * order.n_coef + order.d + order.D * order.m + 10


def _build_fit(order, params, w, y, inv_hessian=None) -> ArimaFit:
    ar, ma, sar, sma, const = _unpack(order, params)
    e = css_residuals(w, order, params)
    sigma2 = float(e @ e) / len(e)
    if not sigma2 > 0:
        raise ModelError(f"degenerate fit for {order.label()}: zero residual variance")
    n = len(w)
    k = order.n_params + 1
    aic = n * math.log(sigma2) + 2 * k
    return ArimaFit(order, np.array(ar), np.array(ma), np.array(sar), np.array(sma),
                    float(const), sigma2, aic, n, series=y, inv_hessian=inv_hessian)


def estimate(series, order: ArimaOrder, start=None, *, max_iter: int = MAX_ITER,
             return_trace: bool = False, inv_hessian=None):
    """Fit ``order`` to ``series`` by conditional sum of squares.

    Coefficients start at zero (or at ``start`` for warm restarts) and move by
    BFGS on ``log(SSE / n_eff)``; non-stationary or non-invertible candidates
    score ``+inf``. ``AIC = n*ln(sigma2) + 2k`` where ``n`` is the differenced
    length and ``k`` counts coefficients, the constant and the variance.
    """
    y = np.asarray(series, dtype=float)
    if len(y) < min_length(order):
        raise DataError(f"series of length {len(y)} too short for {order.label()} "
                        f"(needs {min_length(order)})")
    w = difference(y, order.d, order.D, order.m).astype(float)
    f = _css_objective(w, order)
    x0 = np.zeros(order.n_params) if start is None else np.asarray(start, dtype=float)
    if start is not None and not math.isfinite(f(x0)):
        x0, inv_hessian = np.zeros(order.n_params), None
    res = bfgs(f, x0, max_iter=max_iter, H0=inv_hessian)
    fit = _build_fit(order, res.x, w, y, res.H)
    return (fit, res) if return_trace else fit


def update(fit: ArimaFit, new_observations) -> ArimaFit:
    """Re-estimate with the same order on the extended series, warm-started."""
    new = np.asarray(new_observations, dtype=float).ravel()
    if fit.series is None:
        raise ModelError("fit carries no series; reattach it before updating")
    if len(new) == 0:
        return fit
    y = np.concatenate([fit.series, new])
    try:
        return estimate(y, fit.order, start=fit.params, inv_hessian=fit.inv_hessian)
    except ConvergenceError as exc:
        w = difference(y, fit.order.d, fit.order.D, fit.order.m).astype(float)
        return _build_fit(fit.order, exc.best, w, y)


# ----------------------------------------------------------------- forecasting

def forecast(fit: ArimaFit, series=None, horizon: int = 7) -> np.ndarray:
    """Recursive point forecasts, integrated back to the level of ``series``."""
    if horizon <= 0:
        raise ModelError(f"horizon must be positive, got {horizon}")
    y = np.asarray(fit.series if series is None else series, dtype=float)
    if y is None or y.ndim != 1:
        raise ModelError("forecast needs the fitted series")
    order = fit.order
    params = fit.params
    w = difference(y, order.d, order.D, order.m).astype(float)
    ar_poly, ma_poly, const = _full_polys(order, params)
    e = css_residuals(w, order, params)
    r = len(ar_poly) - 1
    qf = len(ma_poly) - 1
    x = list(w - const)
    resid = [0.0] * r + list(e)
    for _ in range(horizon):
        val = -sum(ar_poly[k] * x[-k] for k in range(1, r + 1))
        val += sum(ma_poly[j] * resid[-j] for j in range(1, qf + 1) if j <= len(resid))
        x.append(val)
        resid.append(0.0)
    w_hat = np.array(x[-horizon:]) + const

    delta = _diff_poly(order.d, order.D, order.m).astype(float)
    lag = len(delta) - 1
    if lag == 0:
        return w_hat
    hist = list(y)
    for h in range(horizon):
        hist.append(w_hat[h] - sum(delta[k] * hist[-k] for k in range(1, lag + 1)))
    return np.array(hist[-horizon:])


# ------------------------------------------------------------------- stepwise

def _poly_roots(poly: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(poly) > 0)
    deg = nz[-1] if len(nz) else 0
    return np.roots(poly[:deg + 1][::-1]) if deg else np.zeros(0, dtype=complex)


def search_admissible(fit: ArimaFit) -> bool:
    """Screen a candidate during order search.

    Rejects fits with a root within 1% of the unit circle, and fits whose AR
    and MA polynomials share a near-common root (relative distance below
    ``CANCEL_TOL``), since such a model is a redundant over-parameterisation of
    a smaller one.
    """
    order = fit.order
    ar_poly, ma_poly, _ = _full_polys(order, fit.params)
    ar_roots, ma_roots = _poly_roots(ar_poly), _poly_roots(ma_poly)
    for roots in (ar_roots, ma_roots):
        if len(roots) and np.abs(roots).min() < 1 + SEARCH_ROOT_MARGIN:
            return False
    if len(ar_roots) and len(ma_roots):
        gap = np.abs(ar_roots[:, None] - ma_roots[None, :]) / np.abs(ar_roots)[:, None]
        if gap.min() < CANCEL_TOL:
            return False
    return True


def select_differencing(y: np.ndarray, seasonal: bool, m: int) -> tuple[int, int]:
    """Successive KPSS tests: seasonal difference first (when seasonal), then up
    to two regular differences, stopping at the first non-rejection."""
    D = 0
    x = y
    if seasonal and len(y) > m + 12 and kpss_stationarity(x).nonstationary:
        D = 1
        x = difference(x, 0, 1, m)
    d = 0
    while d < 2 and len(x) > 13 and kpss_stationarity(x).nonstationary:
        d += 1
        x = difference(x, 1, 0, 0)
    return d, D


def stepwise_select(series, seasonal: bool = False, m: int = 7,
                    max_models: int = MAX_MODELS) -> ArimaFit:
    """Greedy AIC search over orders (Hyndman-Khandakar style).

    Starts from four seed orders, then moves to the first ±1 neighbour in
    p, q, P, Q (or a constant toggle) with strictly lower AIC, until no
    neighbour improves or ``max_models`` fits have been tried. The returned
    fit carries ``search_log``: ``(order, aic)`` for every model attempted
    (``aic`` is None for failures).
    """
    y = np.asarray(series, dtype=float)
    if len(y) < 30 or (seasonal and len(y) < 3 * m):
        raise DataError(f"series of length {len(y)} too short for order selection")
    m = m if seasonal else 0
    d, D = select_differencing(y, seasonal, m)
    allow_const = d + D <= 1

    tried: dict[ArimaOrder, ArimaFit | None] = {}
    search_log = []

    def attempt(order: ArimaOrder):
        if order in tried or len(tried) >= max_models:
            return tried.get(order)
        try:
            fit = estimate(y, order)
        except ConvergenceError as exc:
            w = difference(y, order.d, order.D, order.m).astype(float)
            fit = _build_fit(order, exc.best, w, y)
        except (ModelError, DataError):
            fit = None
        if fit is not None and not search_admissible(fit):
            fit = None
        tried[order] = fit
        search_log.append((order, None if fit is None else fit.aic))
        return fit

    def mk(p, q, P=0, Q=0, c=allow_const):
        return ArimaOrder(p, d, q, P if m else 0, D, Q if m else 0, m, c and allow_const)

    if m:
        seeds = [mk(2, 2, 1, 1), mk(0, 0, 0, 0), mk(1, 0, 1, 0), mk(0, 1, 0, 1)]
    else:
        seeds = [mk(2, 2), mk(0, 0), mk(1, 0), mk(0, 1)]
    best = None
    for order in seeds:
        fit = attempt(order)
        if fit is not None and (best is None or fit.aic < best.aic):
            best = fit
    if best is None:
        raise ModelError("every seed order failed to estimate")

    improved = True
    while improved and len(tried) < max_models:
        improved = False
        o = best.order
        moves = []
        for dp, dq, dP, dQ in ((-1, 0, 0, 0), (1, 0, 0, 0), (0, -1, 0, 0), (0, 1, 0, 0),
                               (0, 0, -1, 0), (0, 0, 1, 0), (0, 0, 0, -1), (0, 0, 0, 1)):
            if (dP or dQ) and not m:
                continue
            p, q, P, Q = o.p + dp, o.q + dq, o.P + dP, o.Q + dQ
            if 0 <= p <= 5 and 0 <= q <= 5 and 0 <= P <= 2 and 0 <= Q <= 2:
                moves.append(replace(o, p=p, q=q, P=P, Q=Q))
        if allow_const:
            moves.append(replace(o, with_constant=not o.with_constant))
        for cand in moves:
            if cand in tried:
                continue
            fit = attempt(cand)
            if fit is not None and fit.aic < best.aic:
                best = fit
                improved = True
                break
            if len(tried) >= max_models:
                break
    return replace(best, search_log=tuple(search_log))
