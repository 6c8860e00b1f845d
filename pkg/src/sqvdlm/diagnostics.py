"""Forecast accuracy metrics and residual / series diagnostics."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.stats import chi2

from .errors import DegenerateDesignError, PrewhiteningError, UndefinedMetricError
from .io import write_rows_csv

METRICS = ("MAE", "MAPE", "RMSE")
WINDOWS = ("in", "out6", "out12")
WINDOW_HORIZONS = {"out6": (1, 6), "out12": (7, 12)}


def mae(errors) -> float:
    return float(np.mean(np.abs(errors)))


def rmse(errors) -> float:
    return float(np.sqrt(np.mean(np.square(errors))))


def mape(errors, actual) -> float:
    """Mean absolute percentage error in percent; undefined if any actual is zero."""
    actual = np.asarray(actual, dtype=float)
    if np.any(actual == 0):
        raise UndefinedMetricError("MAPE is undefined when an actual value is zero")
    return float(np.mean(100.0 * np.abs(np.asarray(errors)) / np.abs(actual)))


@dataclass
class AccuracyReport:
    values: dict = field(default_factory=dict)  # (metric, window) -> float
    flags: list = field(default_factory=list)

    def get(self, metric: str, window: str) -> Optional[float]:
        return self.values.get((metric, window))

    def windows(self) -> list:
        return [w for w in WINDOWS if any((m, w) in self.values for m in METRICS)]

    def to_dict(self) -> dict:
        out = {w: {m: self.values.get((m, w)) for m in METRICS} for w in WINDOWS}
        out["flags"] = list(self.flags)
        return out


def _window_metrics(report, window, err, act):
    keep = ~(np.isnan(err) | np.isnan(act))
    err, act = err[keep], act[keep]
    if err.size == 0:
        return
    report.values[("MAE", window)] = mae(err)
    report.values[("RMSE", window)] = rmse(err)
    try:
        report.values[("MAPE", window)] = mape(err, act)
    except UndefinedMetricError as exc:
        report.flags.append(f"MAPE[{window}]: {exc}")


def accuracy(actual, fitted, forecasts, holdout) -> AccuracyReport:
    """MAE/MAPE/RMSE in-sample and for horizons 1-6 and 7-12.

    ``fitted`` aligns with the last ``len(fitted)`` training values (forecasters
    drop a warm-up at the start). Windows the holdout does not cover are omitted.
    """
    train = np.asarray(getattr(actual, "values", actual), dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    if fitted.size > train.size:
        raise ValueError("more fitted values than training observations")
    test = np.asarray(getattr(holdout, "values", holdout), dtype=float)
    forecasts = np.asarray(forecasts, dtype=float)
    report = AccuracyReport()
    if fitted.size:
        act = train[train.size - fitted.size:]
        _window_metrics(report, "in", act - fitted, act)
    n = min(test.size, forecasts.size)
    for window, (lo, hi) in WINDOW_HORIZONS.items():
        if n < lo:
            continue
        hi = min(hi, n)
        act = test[lo - 1:hi]
        _window_metrics(report, window, act - forecasts[lo - 1:hi], act)
    return report


@dataclass
class ComparisonTable:
    """Model x metric x window accuracy table; failed models keep a row."""

    models: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)  # model -> AccuracyReport
    failures: dict = field(default_factory=dict)  # model -> message

    def add(self, model: str, report: AccuracyReport) -> None:
        self.models.append(model)
        self.reports[model] = report

    def fail(self, model: str, message: str) -> None:
        self.models.append(model)
        self.failures[model] = message

    def header(self):
        return ["model"] + [f"{m}_{w}" for m in METRICS for w in WINDOWS] + ["status"]

    def rows(self):
        for model in self.models:
            rep = self.reports.get(model)
            cells = [rep.get(m, w) if rep else None for m in METRICS for w in WINDOWS]
            status = "ok" if rep else "failed: " + self.failures[model].replace(",", ";").replace("\n", " ")
            yield [model] + cells + [status]

    def to_csv(self, path) -> None:
        write_rows_csv(path, self.header(), self.rows())

    def to_dict(self) -> dict:
        return {"models": {k: v.to_dict() for k, v in self.reports.items()},
                "failures": dict(self.failures)}


# --- cross-correlation --------------------------------------------------------

@dataclass
class CcfReport:
    lags: np.ndarray
    values: np.ndarray
    bound: float
    ar_order: int
    ar_coefficients: np.ndarray

    def at(self, lag: int) -> float:
        return float(self.values[int(lag) - int(self.lags[0])])

    def to_dict(self) -> dict:
        return {"lags": self.lags.tolist(), "values": self.values.tolist(), "bound": self.bound,
                "ar_order": self.ar_order, "ar_coefficients": self.ar_coefficients.tolist()}


def _lag_matrix(x, p, start):
    """Columns x_{t-1}..x_{t-p} for t = start..n-1."""
    n = x.size
    return np.column_stack([x[start - k:n - k] for k in range(1, p + 1)]) if p else np.empty((n - start, 0))


def fit_ar_aic(x, max_order: int = 12):
    """OLS AR(p) with intercept, p chosen by AIC on a common sample."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n <= 2 * max_order + 2:
        raise ValueError(f"series of length {n} too short for AR order search up to {max_order}")
    target = x[max_order:]
    best = None
    for p in range(max_order + 1):
        X = np.column_stack([np.ones(target.size), _lag_matrix(x, p, max_order)])
        coef, *_ = np.linalg.lstsq(X, target, rcond=None)
        resid = target - X @ coef
        aic = target.size * np.log(np.mean(resid ** 2)) + 2 * (p + 1)
        if best is None or aic < best[0]:
            best = (aic, p)
    p = best[1]
    X = np.column_stack([np.ones(n - p), _lag_matrix(x, p, p)])
    coef, *_ = np.linalg.lstsq(X, x[p:], rcond=None)
    return p, coef[1:]


def _is_stationary(phi) -> bool:
    if phi.size == 0:
        return True
    companion = np.zeros((phi.size, phi.size))
    companion[0] = phi
    companion[np.arange(1, phi.size), np.arange(phi.size - 1)] = 1.0
    return bool(np.max(np.abs(np.linalg.eigvals(companion))) < 1.0)


def _ar_filter(x, phi):
    x = np.asarray(x, dtype=float) - np.mean(x)
    p = phi.size
    return x[p:] - (_lag_matrix(x, p, p) @ phi if p else 0.0)


def cross_correlation(x, y, max_lag: int) -> np.ndarray:
    """corr(x_t, y_{t+k}) for k = -max_lag..max_lag (biased estimator)."""
    x = np.asarray(x, dtype=float) - np.mean(x)
    y = np.asarray(y, dtype=float) - np.mean(y)
    n = x.size
    denom = n * np.std(x) * np.std(y)
    out = np.empty(2 * max_lag + 1)
    for i, k in enumerate(range(-max_lag, max_lag + 1)):
        if k >= 0:
            out[i] = np.dot(x[:n - k], y[k:]) / denom
        else:
            out[i] = np.dot(x[-k:], y[:n + k]) / denom
    return out


def prewhitened_ccf(x, y, max_lag: int, max_ar_order: int = 12) -> CcfReport:
    """Cross-correlation after filtering both series by the AR model fitted to ``x``."""
    xv = np.asarray(getattr(x, "values", x), dtype=float)
    yv = np.asarray(getattr(y, "values", y), dtype=float)
    if xv.size != yv.size:
        raise ValueError("series lengths differ")
    if xv.size < 3 * max_lag:
        raise ValueError(f"need at least {3 * max_lag} observations for max lag {max_lag}")
    if np.isnan(xv).any() or np.isnan(yv).any():
        raise ValueError("prewhitening requires series without missing values")
    p, phi = fit_ar_aic(xv, max_ar_order)
    if not _is_stationary(phi):
        raise PrewhiteningError(f"fitted AR({p}) for prewhitening is not stationary")
    ex, ey = _ar_filter(xv, phi), _ar_filter(yv, phi)
    values = np.clip(cross_correlation(ex, ey, max_lag), -1.0, 1.0)
    return CcfReport(np.arange(-max_lag, max_lag + 1), values, 1.96 / np.sqrt(ex.size), p, phi)


# --- Ljung-Box -----------------------------------------------------------------

def acf(x, max_lag: int) -> np.ndarray:
    """Sample autocorrelations r_1..r_max_lag of the demeaned series."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    denom = np.dot(x, x)
    return np.array([np.dot(x[:-k], x[k:]) / denom for k in range(1, max_lag + 1)])


class LjungBoxResult(NamedTuple):
    statistic: float
    p_value: float
    df: int


def ljung_box(residuals, max_lag: int, fitted_params: int = 0) -> LjungBoxResult:
    """Ljung-Box portmanteau statistic with a chi-square reference."""
    e = np.asarray(getattr(residuals, "values", residuals), dtype=float)
    e = e[~np.isnan(e)]
    n = e.size
    if n <= max_lag:
        raise ValueError(f"need more than {max_lag} residuals, got {n}")
    df = max_lag - fitted_params
    if df <= 0:
        raise ValueError(f"degrees of freedom {df} <= 0")
    r = acf(e, max_lag)
    k = np.arange(1, max_lag + 1)
    q = float(n * (n + 2) * np.sum(r ** 2 / (n - k)))
    return LjungBoxResult(q, float(chi2.sf(q, df)), df)


# --- ADF ---------------------------------------------------------------------

# constant-only 5% critical values of the Dickey-Fuller tau statistic
ADF_CRITICAL_5PCT = ((25, -3.00), (50, -2.93), (100, -2.89), (250, -2.88), (500, -2.87))


def adf_critical_value(n: int) -> float:
    sizes, values = zip(*ADF_CRITICAL_5PCT)
    return float(np.interp(n, sizes, values))


def _adf_design(x, lag, start):
    dx = np.diff(x)
    rows = np.arange(start, dx.size)
    X = [np.ones(rows.size), x[rows]]
    X += [dx[rows - i] for i in range(1, lag + 1)]
    return np.column_stack(X), dx[rows]


def _ols_t(X, z):
    n, k = X.shape
    if n <= k:
        raise DegenerateDesignError(f"{n} observations for {k} regressors")
    XtX = X.T @ X
    if np.linalg.cond(XtX) > 1e14:
        raise DegenerateDesignError("ADF regression design is singular")
    coef = np.linalg.solve(XtX, X.T @ z)
    resid = z - X @ coef
    s2 = resid @ resid / (n - k)
    se = np.sqrt(s2 * np.linalg.inv(XtX)[1, 1])
    return float(coef[1] / se), resid


def adf_regression(x, lag: int) -> float:
    """Dickey-Fuller tau for a fixed augmentation lag (regression with constant)."""
    x = np.asarray(getattr(x, "values", x), dtype=float)
    X, z = _adf_design(x, lag, lag)
    return _ols_t(X, z)[0]


class AdfResult(NamedTuple):
    statistic: float
    reject: bool
    lag: int
    critical_value: float
    nobs: int


def adf_test(x, max_lag: int) -> AdfResult:
    """Augmented Dickey-Fuller test with constant; lag by AIC, decision at 5%."""
    x = np.asarray(getattr(x, "values", x), dtype=float)
    if x.size < 25:
        raise ValueError(f"ADF needs at least 25 observations, got {x.size}")
    if np.isnan(x).any():
        raise ValueError("ADF requires a series without missing values")
    best = None
    for lag in range(max_lag + 1):
        X, z = _adf_design(x, lag, max_lag)
        _, resid = _ols_t(X, z)
        aic = z.size * np.log(resid @ resid / z.size) + 2 * X.shape[1]
        if best is None or aic < best[0]:
            best = (aic, lag)
    lag = best[1]
    X, z = _adf_design(x, lag, lag)
    stat = _ols_t(X, z)[0]
    crit = adf_critical_value(z.size)
    return AdfResult(stat, bool(stat < crit), lag, crit, int(z.size))


# --- interval comparison -------------------------------------------------------

def _lengths(intervals):
    if hasattr(intervals, "interval_length"):
        return np.asarray(intervals.interval_length, dtype=float)
    lower, upper = intervals
    return np.asarray(upper, dtype=float) - np.asarray(lower, dtype=float)


def interval_length_pct_diff(a_intervals, b_intervals) -> np.ndarray:
    """Per-horizon 100*(L_b - L_a)/L_a with L the interval length."""
    la, lb = _lengths(a_intervals), _lengths(b_intervals)
    if la.shape != lb.shape:
        raise ValueError(f"horizon mismatch: {la.shape} vs {lb.shape}")
    la_level = getattr(a_intervals, "level", None)
    lb_level = getattr(b_intervals, "level", None)
    if la_level is not None and lb_level is not None and la_level != lb_level:
        raise ValueError(f"interval levels differ: {la_level} vs {lb_level}")
    if np.any(la == 0):
        raise UndefinedMetricError("reference interval has zero length")
    return 100.0 * (lb - la) / la
