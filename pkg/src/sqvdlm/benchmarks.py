"""Comparison forecasters sharing one output type.

Seasonal naive, additive Holt-Winters, SARIMA with AIC order selection, and the
DLM variants (single-state ``dlm0`` and the replicated two-state model).
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_discrete_lyapunov
from scipy.optimize import minimize
from scipy.stats import norm

from .dlm import (
    StateSpaceSpec,
    build_dlm0,
    build_nhnr_dlm,
    filter_arrays,
    forecast,
    kalman_filter,
)
from .em import EmConfig, fit, fit_dlm0
from ._kernels import arma_filter_kernel
from .errors import DegeneracyError, EstimationError
from .io import write_rows_csv
from .series import MonthlySeries, ObservationPanel, demean, month_numbers

PERIOD = 12


@dataclass(eq=False)
class ForecasterOutput:
    fitted: np.ndarray
    forecasts: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    level: Optional[float] = None
    warmup: int = 0
    model_meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.forecasts)

    def rows(self):
        for h, mean in enumerate(self.forecasts, start=1):
            lo = None if self.lower is None else float(self.lower[h - 1])
            hi = None if self.upper is None else float(self.upper[h - 1])
            yield (h, float(mean), lo, hi)

    def to_csv(self, path) -> None:
        write_rows_csv(path, ("horizon", "mean", "lower", "upper"), self.rows())

    def to_dict(self) -> dict:
        return {
            "forecasts": [float(v) for v in self.forecasts],
            "lower": None if self.lower is None else [float(v) for v in self.lower],
            "upper": None if self.upper is None else [float(v) for v in self.upper],
            "level": self.level,
            "fitted": [float(v) for v in self.fitted],
            "warmup": self.warmup,
            "model_meta": self.model_meta,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def snaive(train: MonthlySeries, H: int, level: float = 0.95) -> ForecasterOutput:
    """Repeat the value observed in the same calendar month of the last training year."""
    y = np.asarray(train.values)
    T = y.size
    if T < PERIOD:
        raise ValueError(f"seasonal naive needs >= {PERIOD} training months, got {T}")
    last_year = y[T - PERIOD:]
    idx = np.arange(H) % PERIOD
    fc = last_year[idx].copy()
    fitted = y[:-PERIOD].copy()
    resid = y[PERIOD:] - fitted
    resid = resid[~np.isnan(resid)]
    lower = upper = None
    if resid.size > 1:
        sigma = math.sqrt(np.mean(resid ** 2))
        k = np.arange(H) // PERIOD + 1
        half = norm.ppf(0.5 + level / 2) * sigma * np.sqrt(k)
        lower, upper = fc - half, fc + half
    return ForecasterOutput(fitted, fc, lower, upper, level, PERIOD, {"model": "snaive"})


def _decompose_init(y):
    """Level, trend and seasonal states from a classical decomposition of two years."""
    y = np.asarray(y[: 2 * PERIOD], dtype=float)
    weights = np.r_[0.5, np.ones(PERIOD - 1), 0.5] / PERIOD
    trend = np.convolve(y, weights, mode="valid")  # centres at t = 6..17
    t = np.arange(PERIOD // 2, PERIOD // 2 + trend.size)
    slope, intercept = np.polyfit(t, trend, 1)
    detrended = y[t] - trend
    season = np.empty(PERIOD)
    season[t % PERIOD] = detrended
    season -= season.mean()
    level0 = intercept - slope  # state at t = -1
    return level0, slope, season


def _hw_grid_sse(y, level0, trend0, season0, alphas, betas, gammas):
    """One-step SSE for many weight triples at once (vectorised recursion)."""
    n = alphas.size
    level = np.full(n, level0)
    trend = np.full(n, trend0)
    season = np.repeat(season0[:, None], n, axis=1)
    sse = np.zeros(n)
    for t, obs in enumerate(y):
        s = season[t % PERIOD]
        err = obs - (level + trend + s)
        sse += err ** 2
        new_level = alphas * (obs - s) + (1 - alphas) * (level + trend)
        trend = betas * (new_level - level) + (1 - betas) * trend
        season[t % PERIOD] = gammas * (obs - new_level) + (1 - gammas) * s
        level = new_level
    return sse


def _hw_run(y, weights, level0, trend0, season0):
    alpha, beta, gamma = weights
    level, trend = level0, trend0
    season = season0.copy()
    fitted = np.empty(len(y))
    for t, obs in enumerate(y):
        s = season[t % PERIOD]
        fitted[t] = level + trend + s
        new_level = alpha * (obs - s) + (1 - alpha) * (level + trend)
        trend = beta * (new_level - level) + (1 - beta) * trend
        season[t % PERIOD] = gamma * (obs - new_level) + (1 - gamma) * s
        level = new_level
    return fitted, level, trend, season


HW_CLAMP = 1e-4


def holt_winters(train: MonthlySeries, H: int, grid_step: float = 0.05) -> ForecasterOutput:
    """Additive Holt-Winters; weights by grid search then bounded local refinement."""
    y = np.asarray(train.values, dtype=float)
    if y.size < 2 * PERIOD:
        raise ValueError(f"Holt-Winters needs >= {2 * PERIOD} training months, got {y.size}")
    if np.isnan(y).any():
        raise ValueError("Holt-Winters requires a training series without missing values")
    level0, trend0, season0 = _decompose_init(y)
    axis = np.arange(grid_step, 1.0 - 1e-9, grid_step)
    a, b, g = (m.ravel() for m in np.meshgrid(axis, axis, axis, indexing="ij"))
    sse = _hw_grid_sse(y, level0, trend0, season0, a, b, g)
    k = int(np.argmin(sse))
    best_w, best_sse = np.array([a[k], b[k], g[k]]), float(sse[k])

    def objective(w):
        fitted = _hw_run(y, w, level0, trend0, season0)[0]
        return float(np.sum((y - fitted) ** 2))

    res = minimize(objective, best_w, method="L-BFGS-B",
                   bounds=[(HW_CLAMP, 1 - HW_CLAMP)] * 3)
    if np.isfinite(res.fun) and res.fun <= best_sse:
        best_w, best_sse = np.clip(res.x, HW_CLAMP, 1 - HW_CLAMP), objective(res.x)
    best_w = np.clip(best_w, HW_CLAMP, 1 - HW_CLAMP)
    fitted, level, trend, season = _hw_run(y, best_w, level0, trend0, season0)
    T = y.size
    h = np.arange(1, H + 1)
    fc = level + h * trend + season[(T + h - 1) % PERIOD]
    meta = {"model": "holt_winters", "alpha": float(best_w[0]), "beta": float(best_w[1]),
            "gamma": float(best_w[2]), "sse": float(np.sum((y - fitted) ** 2)),
            "grid_sse_min": float(sse.min())}
    return ForecasterOutput(fitted, fc, warmup=0, model_meta=meta)


# --- SARIMA -----------------------------------------------------------------

DEFAULT_GRID = {"p": (0, 1, 2), "d": (0, 1), "q": (0, 1, 2), "P": (0, 1), "D": (0, 1), "Q": (0, 1)}


def order_grid(grid=None):
    """All (p, d, q, P, D, Q) tuples of a grid dict."""
    g = dict(DEFAULT_GRID, **(grid or {}))
    return [tuple(o) for o in itertools.product(g["p"], g["d"], g["q"], g["P"], g["D"], g["Q"])]


PACF_LIMIT = 0.999


def _constrain(raw):
    """Unconstrained reals -> coefficients of a stationary AR polynomial."""
    # partial autocorrelations kept off +-1 so the stationary covariance stays well posed
    r = np.clip(np.tanh(np.asarray(raw, dtype=float)), -PACF_LIMIT, PACF_LIMIT)
    phi = np.zeros(0)
    for k, rk in enumerate(r):
        phi = np.r_[phi - rk * phi[::-1], rk]
    return phi


def _poly_mul(a, b):
    return np.convolve(a, b)


def _lag_poly(coefs, step, sign):
    """1 + sign*sum(c_j B^(j*step)) as a coefficient array."""
    out = np.zeros(len(coefs) * step + 1)
    out[0] = 1.0
    for j, c in enumerate(coefs, start=1):
        out[j * step] = sign * c
    return out


def _difference(y, d, D):
    w = np.asarray(y, dtype=float)
    for _ in range(d):
        w = w[1:] - w[:-1]
    for _ in range(D):
        w = w[PERIOD:] - w[:-PERIOD]
    return w


def _diff_poly(d, D):
    poly = np.array([1.0])
    for _ in range(d):
        poly = _poly_mul(poly, [1.0, -1.0])
    for _ in range(D):
        poly = _poly_mul(poly, _lag_poly([1.0], PERIOD, -1.0))
    return poly


@dataclass(frozen=True)
class _ArmaPolys:
    ar: np.ndarray  # 1 - a_1 B - ...
    ma: np.ndarray  # 1 + b_1 B + ...


def _sarima_polys(order, params):
    p, d, q, P, D, Q = order
    i = 0
    phi = _constrain(params[i:i + p]); i += p
    theta = -_constrain(params[i:i + q]); i += q
    sphi = _constrain(params[i:i + P]); i += P
    stheta = -_constrain(params[i:i + Q]); i += Q
    ar = _poly_mul(_lag_poly(phi, 1, -1.0), _lag_poly(sphi, PERIOD, -1.0))
    ma = _poly_mul(_lag_poly(theta, 1, 1.0), _lag_poly(stheta, PERIOD, 1.0))
    return _ArmaPolys(ar, ma), (phi, theta, sphi, stheta)


def _arma_system(polys: _ArmaPolys):
    """Harvey-form transition column, noise loading and stationary covariance."""
    a_coef = -polys.ar[1:]
    b = polys.ma[1:]
    r = max(a_coef.size, b.size + 1, 1)
    a = np.zeros(r)
    a[: a_coef.size] = a_coef
    R = np.zeros(r)
    R[0] = 1.0
    R[1: b.size + 1] = b
    G = np.zeros((r, r))
    G[:, 0] = a
    G[np.arange(r - 1), np.arange(1, r)] = 1.0
    P0 = solve_discrete_lyapunov(G, np.outer(R, R))
    return a, R, G, 0.5 * (P0 + P0.T)


def arma_state_space(polys: _ArmaPolys) -> StateSpaceSpec:
    """The ARMA model (unit innovation variance) as a general state-space spec."""
    a, R, G, P0 = _arma_system(polys)
    r = a.size
    F = np.zeros((1, r))
    F[0, 0] = 1.0
    return StateSpaceSpec(F, G, np.zeros((r, 12)), np.zeros((1, 1)), np.outer(R, R),
                          np.zeros(r), P0)


def arma_filter(w, polys: _ArmaPolys):
    """Innovations, innovation variances and the next predicted state."""
    a, R, G, P0 = _arma_system(polys)
    innov, S, x_next, status = arma_filter_kernel(np.ascontiguousarray(w, dtype=float), a, R, P0)
    if status >= 0:
        raise DegeneracyError(int(status) + 1)
    return innov, S, x_next, G


@dataclass(eq=False)
class SarimaCandidate:
    order: tuple
    converged: bool
    loglik: float = float("nan")
    k: int = 0
    aic: float = float("nan")
    params: Optional[np.ndarray] = None
    sigma2: float = float("nan")
    mean: float = 0.0
    message: str = ""


def _sarima_loglik(y, order, raw, with_mean, n_cond):
    """Concentrated Gaussian log-likelihood of y[n_cond:] given y[:n_cond]."""
    p, d, q, P, D, Q = order
    k_arma = p + q + P + Q
    polys, _ = _sarima_polys(order, raw[:k_arma])
    mu = raw[k_arma] if with_mean else 0.0
    w = _difference(y, d, D) - mu
    innov, S, x_next, G = arma_filter(w, polys)
    lag = d + PERIOD * D
    keep = np.arange(w.size) + lag >= n_cond
    e, f = innov[keep], S[keep]
    n = e.size
    sigma2 = float(np.sum(e ** 2 / f) / n)
    ll = -0.5 * n * (math.log(2 * math.pi) + math.log(sigma2) + 1.0) - 0.5 * float(np.sum(np.log(f)))
    return ll, sigma2, (innov, x_next, G)


def _fit_candidate(y, order, n_cond) -> SarimaCandidate:
    p, d, q, P, D, Q = order
    with_mean = d == 0 and D == 0
    k_arma = p + q + P + Q
    start = np.zeros(k_arma + (1 if with_mean else 0))
    if with_mean:
        start[-1] = float(np.nanmean(y))
    k = k_arma + (1 if with_mean else 0) + 1
    scale = float(np.nanstd(y)) or 1.0

    def negll(v):
        v = v.copy()
        if with_mean:
            v[-1] = v[-1] * scale
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                value = -_sarima_loglik(y, order, v, with_mean, n_cond)[0]
        except (DegeneracyError, np.linalg.LinAlgError, ValueError, FloatingPointError):
            return np.inf
        return value if np.isfinite(value) else np.inf

    x0 = start.copy()
    if with_mean:
        x0[-1] /= scale
    if x0.size == 0:
        res_x, fun, ok, msg = x0, negll(x0), True, "no free parameters"
    else:
        with warnings.catch_warnings():
            # finite differences across an infeasible (inf) point are expected
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(negll, x0, method="L-BFGS-B")
        res_x, fun = res.x, res.fun
        ok = bool(np.isfinite(fun) and (res.success or res.status == 2))
        msg = str(res.message)
    if not np.isfinite(fun):
        return SarimaCandidate(order, False, message="non-finite likelihood")
    raw = res_x.copy()
    if with_mean:
        raw[-1] *= scale
    # an optimum on the clamp is a unit root or a non-invertible MA, left to the differencing grid
    if k_arma and np.any(np.abs(np.tanh(raw[:k_arma])) >= PACF_LIMIT):
        ok, msg = False, "partial autocorrelation at the stationarity boundary"
    ll, sigma2, _ = _sarima_loglik(y, order, raw, with_mean, n_cond)
    return SarimaCandidate(order, ok, ll, k, 2 * k - 2 * ll, raw, sigma2,
                           float(raw[-1]) if with_mean else 0.0, msg)


def _psi_weights(ar_full, ma, H):
    psi = np.zeros(H)
    psi[0] = 1.0
    for j in range(1, H):
        acc = ma[j] if j < ma.size else 0.0
        for i in range(1, min(j, ar_full.size - 1) + 1):
            acc += -ar_full[i] * psi[j - i]
        psi[j] = acc
    return psi


def sarima_fit(train: MonthlySeries, H: int = 12, grid=None, level: float = 0.95,
               orders: Optional[Sequence[tuple]] = None) -> ForecasterOutput:
    """Select (p,d,q)(P,D,Q)_12 by AIC on a common conditioning sample and forecast."""
    y = np.asarray(train.values, dtype=float)
    if y.size < 3 * PERIOD:
        raise ValueError(f"SARIMA needs >= {3 * PERIOD} training months, got {y.size}")
    if np.isnan(y).any():
        raise ValueError("SARIMA requires a training series without missing values")
    orders = list(orders) if orders is not None else order_grid(grid)
    n_cond = max(o[1] + PERIOD * o[4] for o in orders)
    candidates = [_fit_candidate(y, o, n_cond) for o in orders]
    good = [c for c in candidates if c.converged and np.isfinite(c.aic)]
    if not good:
        raise EstimationError("no SARIMA candidate converged",
                              {str(c.order): c.message for c in candidates})
    best = min(good, key=lambda c: (c.aic, c.k, c.order))
    return _sarima_output(y, best, candidates, n_cond, H, level)


def _sarima_output(y, best: SarimaCandidate, candidates, n_cond, H, level):
    p, d, q, P, D, Q = best.order
    k_arma = p + q + P + Q
    polys, (phi, theta, sphi, stheta) = _sarima_polys(best.order, best.params[:k_arma])
    _, sigma2, (innov, x, G) = _sarima_loglik(y, best.order, best.params, d == 0 and D == 0, n_cond)
    lag = d + PERIOD * D
    fitted = y[lag:] - innov

    w_fc = np.empty(H)
    for h in range(H):
        w_fc[h] = x[0] + best.mean
        x = G @ x
    delta = _diff_poly(d, D)
    hist = list(y)
    for h in range(H):
        val = w_fc[h] - sum(delta[j] * hist[-j] for j in range(1, delta.size))
        hist.append(val)
    fc = np.array(hist[len(y):])
    psi = _psi_weights(_poly_mul(polys.ar, delta), polys.ma, H)
    var = sigma2 * np.cumsum(psi ** 2)
    half = norm.ppf(0.5 + level / 2) * np.sqrt(var)
    meta = {
        "model": "sarima",
        "order": list(best.order[:3]),
        "seasonal_order": list(best.order[3:]) + [PERIOD],
        "aic": best.aic,
        "loglik": best.loglik,
        "k": best.k,
        "sigma2": sigma2,
        "ar": phi.tolist(), "ma": theta.tolist(), "sar": sphi.tolist(), "sma": stheta.tolist(),
        "mean": best.mean,
        "conditioning_months": n_cond,
        "candidates": [
            {"order": list(c.order), "converged": c.converged,
             "aic": None if not np.isfinite(c.aic) else c.aic, "k": c.k}
            for c in candidates
        ],
    }
    return ForecasterOutput(fitted, fc, fc - half, fc + half, level, lag, meta)


# --- DLM forecasters ---------------------------------------------------------

def dlm0(train: MonthlySeries, H: int, config: EmConfig = EmConfig()) -> ForecasterOutput:
    """Single-state DLM fitted by EM on the demeaned training series."""
    if len(train) < 2 * PERIOD:
        raise ValueError(f"dlm0 needs >= {2 * PERIOD} training months, got {len(train)}")
    values = np.asarray(train.values)
    offset = float(np.nanmean(values))
    centred = MonthlySeries(train.start, values - offset)
    report = fit_dlm0(centred, config)
    spec = build_dlm0(report.params, config.initial)
    filt = filter_arrays(spec, centred.values.reshape(-1, 1), month_numbers(train.start, len(train)))
    fc = forecast(spec, filt, H, config.level, offsets=(offset,))
    fitted = filt.predicted_mean[:, 0] + offset
    meta = {"model": "dlm0", "offset": offset, "fit": report.to_dict()}
    return ForecasterOutput(fitted, fc.target_mean, fc.target_lower, fc.target_upper,
                            config.level, 0, meta)


def dlm_forecaster(train: ObservationPanel, H: int, config: EmConfig = EmConfig()):
    """Replicated-SQV DLM on a training panel; returns (output, forecast result, report)."""
    centred = demean(train, train.end)
    report = fit(centred, centred.a, config)
    spec = build_nhnr_dlm(report.params, centred.a, config.initial)
    filt = kalman_filter(spec, centred)
    fc = forecast(spec, filt, H, config.level, offsets=centred.demean_offsets)
    fitted = filt.predicted_mean[:, 0] + centred.demean_offsets[0]
    meta = {"model": report.model, "offsets": list(centred.demean_offsets), "fit": report.to_dict()}
    out = ForecasterOutput(fitted, fc.target_mean, fc.target_lower, fc.target_upper,
                           config.level, 0, meta)
    return out, fc, report
