"""EM maximum likelihood for the replicated search-volume DLM (and its no-SQV variant).

E-step: Kalman smoother moments. M-step: closed form. Because ``W`` is diagonal,
the state equation splits into one regression per state row:

    x1_t - x1_{t-1} = beta * x2_{t-1} + C[0] s_t + w1_t
    x2_t - x2_{t-1} =                   C[1] s_t + w2_t

each solved exactly from smoothed second moments. With a fixed initial state
(``P0 = 0``) the first-period mean ``G x0 + C s_1`` is linear in
``(x0_1 + beta * x0_2, x0_2)``, so ``x0`` joins the regressions through that
reparametrization instead of the (inert) smoothed initial state.

The ``a`` replicate rows share one loading and one variance, so the filter runs
on (target, replicate mean) with variance ``sigma2_y2 / n_t`` and the
within-replicate scatter is added to the likelihood analytically.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm

from .dlm import (
    Dlm0Params,
    DlmParams,
    FilterResult,
    StateSpaceSpec,
    build_dlm0,
    build_nhnr_dlm,
    filter_arrays,
    kalman_filter,
    kalman_smoother,
)
from .errors import DegenerateDesignError, EstimationError, SqvDlmError
from .series import MonthlySeries, ObservationPanel, month_numbers

LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class EmConfig:
    max_iterations: int = 5000
    rel_tol: float = 1e-8
    n_starts: int = 20
    warmup_iterations: int = 50
    seed: int = 0
    # multiple of each series' sample variance
    variance_floor: float = 1e-8
    initial: str = "fixed"
    level: float = 0.95

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.warmup_iterations < 0:
            raise ValueError("warmup_iterations must be >= 0")
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be positive")
        if self.initial not in ("fixed", "diffuse"):
            raise ValueError("initial must be 'fixed' or 'diffuse'")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d) -> "EmConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown EM config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """Smoothed moments; index 0 of ``mean``/``cov`` is the initial state x_0."""

    mean: np.ndarray
    cov: np.ndarray
    cross: np.ndarray
    months: np.ndarray
    loglik: float
    initial_fixed: bool


@dataclass(frozen=True, eq=False)
class HessianCI:
    names: tuple
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    se: np.ndarray
    level: float
    reliable: bool

    def as_dict(self) -> dict:
        return {n: (float(lo), float(hi)) for n, lo, hi in zip(self.names, self.lower, self.upper)}


@dataclass(eq=False)
class FitReport:
    params: object
    loglik_trace: list
    converged: bool
    iterations_used: int
    ci: dict
    se: dict
    ci_level: float
    ci_reliable: bool
    start_diagnostics: list
    config: EmConfig
    model: str = "dlm1"
    a: int = 0

    @property
    def loglik(self) -> float:
        return max(self.loglik_trace)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "a": self.a,
            "params": self.params.to_dict(),
            "loglik": self.loglik,
            "loglik_trace": list(self.loglik_trace),
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "ci_level": self.ci_level,
            "ci_reliable": self.ci_reliable,
            "ci": {k: list(v) for k, v in self.ci.items()},
            "se": dict(self.se),
            "start_diagnostics": list(self.start_diagnostics),
            "config": self.config.to_dict(),
        }


def _stats_from(filt: FilterResult, spec: StateSpaceSpec, loglik: float) -> SufficientStats:
    sm = kalman_smoother(spec, filt)
    mean = np.vstack([sm.initial_mean[None, :], sm.mean])
    cov = np.concatenate([sm.initial_cov[None], sm.cov])
    return SufficientStats(mean, cov, sm.lag_one_cov, filt.months, loglik, spec.fixed_initial_state)


def e_step(spec: StateSpaceSpec, panel: ObservationPanel) -> SufficientStats:
    """Smoothed first/second/lag-one moments under ``spec``."""
    filt = kalman_filter(spec, panel)
    return _stats_from(filt, spec, filt.loglik)


def _row_regression(stats: SufficientStats, row: int, coupled: Optional[int]):
    """Expected least squares for one state row.

    Columns: [beta (if coupled)] + 12 month effects + [first-period intercept
    (fixed initial state only)]. Returns (theta, expected residual SS).
    """
    q = stats.mean.shape[1]
    T = stats.cross.shape[0]
    d = 2 * q + 1
    # u_t = (x_{t-1}, x_t, 1)
    mu = np.empty((T, d))
    mu[:, :q] = stats.mean[:-1]
    mu[:, q:2 * q] = stats.mean[1:]
    mu[:, -1] = 1.0
    M = mu[:, :, None] * mu[:, None, :]
    M[:, :q, :q] += stats.cov[:-1]
    M[:, q:2 * q, q:2 * q] += stats.cov[1:]
    M[:, q:2 * q, :q] += stats.cross
    M[:, :q, q:2 * q] += np.transpose(stats.cross, (0, 2, 1))

    fixed = stats.initial_fixed
    cols = (1 if coupled is not None else 0) + 12 + (1 if fixed else 0)
    resp = np.zeros((T, d))
    resp[:, q + row] = 1.0
    resp[:, row] = -1.0
    B = np.zeros((T, cols, d))
    c = 0
    if coupled is not None:
        B[:, 0, coupled] = 1.0
        c = 1
    B[np.arange(T), c + stats.months - 1, -1] = 1.0
    if fixed:
        resp[0, row] = 0.0
        if coupled is not None:
            B[0, 0, coupled] = 0.0
        B[0, -1, -1] = 1.0

    BM = B @ M
    A = np.tensordot(BM, B, axes=([0, 2], [0, 2]))
    b = np.tensordot(BM, resp, axes=([0, 2], [0, 1]))
    cc = float(np.sum(resp * (M @ resp[:, :, None])[:, :, 0]))
    if np.linalg.cond(A) > 1e13:
        raise DegenerateDesignError(f"normal equations for state row {row} are singular")
    theta = np.linalg.solve(A, b)
    ss = cc - 2.0 * theta @ b + theta @ A @ theta
    return theta, max(ss, 0.0)


@dataclass(frozen=True, eq=False)
class _NhnrData:
    """Replicate-collapsed view of a panel."""

    y1: np.ndarray
    ybar: np.ndarray
    n: np.ndarray
    ssw: np.ndarray
    months: np.ndarray
    a: int

    @classmethod
    def from_panel(cls, panel: ObservationPanel) -> "_NhnrData":
        reps = panel.as_array()[:, 1:]
        obs = ~np.isnan(reps)
        n = obs.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            ybar = np.where(n > 0, np.nansum(reps, axis=1) / np.maximum(n, 1), np.nan)
        dev = np.where(obs, reps - ybar[:, None], 0.0)
        ssw = (dev ** 2).sum(axis=1)
        return cls(panel.target.values.copy(), ybar, n, ssw, panel.months, panel.a)

    @property
    def collapsed(self) -> np.ndarray:
        return np.column_stack([self.y1, self.ybar])


def _nanvar(x):
    x = np.asarray(x, dtype=float)
    x = x[~np.isnan(x)]
    return float(x.var()) if x.size > 1 else 1.0


class _NhnrModel:
    """Two-state model with ``a`` exchangeable replicate rows."""

    name = "dlm1"

    def __init__(self, panel: ObservationPanel, config: EmConfig):
        self.data = _NhnrData.from_panel(panel)
        self.config = config
        d = self.data
        v_target = _nanvar(d.y1) or 1.0
        v_sqv = _nanvar(panel.as_array()[:, 1:]) or 1.0
        f = config.variance_floor
        self.floors = {"sigma2_y1": f * v_target, "sigma2_x1": f * v_target,
                       "sigma2_y2": f * v_sqv, "sigma2_x2": f * v_sqv}
        self._y = np.ascontiguousarray(d.collapsed)
        self._F_t = np.broadcast_to(np.eye(2), (len(d.y1), 2, 2))
        self._obs_rep = d.n > 0

    @property
    def beta_moment(self) -> float:
        """OLS slope of target increments on the lagged replicate mean, with month effects."""
        d = self.data
        dy = np.diff(d.y1)
        lag = d.ybar[:-1]
        ok = ~(np.isnan(dy) | np.isnan(lag))
        if ok.sum() < 14:
            return 0.0
        X = np.column_stack([lag[ok], np.eye(12)[d.months[1:][ok] - 1]])
        coef, *_ = np.linalg.lstsq(X, dy[ok], rcond=None)
        return float(coef[0]) if np.isfinite(coef[0]) else 0.0

    def spec(self, params: DlmParams) -> StateSpaceSpec:
        """Collapsed two-row spec (target, replicate mean)."""
        full = build_nhnr_dlm(params, 1, self.config.initial)
        return full

    def filter(self, params: DlmParams):
        spec = self.spec(params)
        T = len(self.data.y1)
        V_t = np.zeros((T, 2, 2))
        V_t[:, 0, 0] = params.sigma2_y1
        V_t[:, 1, 1] = params.sigma2_y2 / np.maximum(self.data.n, 1)
        filt = filter_arrays(spec, self._y, self.data.months, self._F_t, V_t)
        return spec, filt, filt.loglik + self.correction(params)

    def correction(self, params: DlmParams) -> float:
        n = self.data.n[self._obs_rep]
        s2 = params.sigma2_y2
        return float(np.sum(-(n - 1) / 2.0 * (LOG_2PI + math.log(s2)) - 0.5 * np.log(n)
                            - self.data.ssw[self._obs_rep] / (2.0 * s2)))

    def m_step(self, stats: SufficientStats, params: DlmParams) -> DlmParams:
        return _m_step_nhnr(stats, self.data, self.floors)

    def random_start(self, rng: np.random.Generator) -> DlmParams:
        d = self.data
        v1 = _nanvar(np.diff(d.y1))
        v2 = _nanvar(np.diff(d.ybar))
        if d.a > 1 and np.any(d.n > 1):
            rep = float(np.sum(d.ssw) / np.sum(np.maximum(d.n - 1, 0)))
        else:
            rep = v2 / 2.0
        sd1 = math.sqrt(_nanvar(d.y1))
        sd2 = math.sqrt(_nanvar(d.ybar))
        beta_range = 2.0 * sd1 / sd2 if sd2 > 0 else 1.0

        def logu(lo, hi):
            return math.exp(rng.uniform(math.log(lo), math.log(hi)))

        x0 = np.array([_first_finite(d.y1), _first_finite(d.ybar)])
        # half the starts centre beta on a moment estimate; EM moves beta slowly
        # when the two state rows are strongly coupled
        centre = self.beta_moment if rng.random() < 0.5 else 0.0
        return DlmParams(
            beta=centre + rng.uniform(-beta_range, beta_range) * (0.1 if centre else 1.0),
            sigma2_y1=max(v1 * logu(0.01, 1.0), self.floors["sigma2_y1"]),
            sigma2_y2=max(rep * logu(0.1, 3.0), self.floors["sigma2_y2"]),
            sigma2_x1=max(v1 * logu(0.01, 1.0), self.floors["sigma2_x1"]),
            sigma2_x2=max(v2 * logu(0.01, 1.0), self.floors["sigma2_x2"]),
            C=np.zeros((2, 12)),
            x0=x0,
        )

    names = (
        ("beta", "sigma2_y1", "sigma2_y2", "sigma2_x1", "sigma2_x2")
        + tuple(f"C[{i}][{j}]" for i in range(2) for j in range(12))
        + ("x0[0]", "x0[1]")
    )
    log_scale = (False, True, True, True, True) + (False,) * 26

    def pack(self, p: DlmParams) -> np.ndarray:
        return np.concatenate([[p.beta, p.sigma2_y1, p.sigma2_y2, p.sigma2_x1, p.sigma2_x2],
                               p.C.ravel(), p.x0])

    def unpack(self, v) -> DlmParams:
        return DlmParams(v[0], v[1], v[2], v[3], v[4], np.reshape(v[5:29], (2, 12)), v[29:31])


def _first_finite(x):
    x = np.asarray(x)
    finite = x[~np.isnan(x)]
    return float(finite[0]) if finite.size else 0.0


def _m_step_nhnr(stats: SufficientStats, data: _NhnrData, floors) -> DlmParams:
    T = len(data.y1)
    theta1, ss1 = _row_regression(stats, 0, coupled=1)
    theta2, ss2 = _row_regression(stats, 1, coupled=None)
    beta = float(theta1[0])
    C = np.vstack([theta1[1:13], theta2[:12]])
    if stats.initial_fixed:
        x0_2 = float(theta2[12])
        x0 = np.array([theta1[13] - beta * x0_2, x0_2])
    else:
        x0 = stats.mean[0].copy()
    m = stats.mean[1:]
    P = stats.cov[1:]
    obs1 = ~np.isnan(data.y1)
    if obs1.any():
        s_y1 = float(np.mean((data.y1[obs1] - m[obs1, 0]) ** 2 + P[obs1, 0, 0]))
    else:
        s_y1 = floors["sigma2_y1"]
    obs2 = data.n > 0
    if obs2.any():
        n = data.n[obs2]
        s_y2 = float(np.sum(data.ssw[obs2] + n * ((data.ybar[obs2] - m[obs2, 1]) ** 2 + P[obs2, 1, 1]))
                     / np.sum(n))
    else:
        s_y2 = floors["sigma2_y2"]
    return DlmParams(
        beta,
        max(s_y1, floors["sigma2_y1"]),
        max(s_y2, floors["sigma2_y2"]),
        max(ss1 / T, floors["sigma2_x1"]),
        max(ss2 / T, floors["sigma2_x2"]),
        C,
        x0,
    )


def m_step(stats: SufficientStats, panel: ObservationPanel, variance_floor: float = 1e-8) -> DlmParams:
    """Closed-form parameter update for the replicated model."""
    data = _NhnrData.from_panel(panel)
    v_target = _nanvar(data.y1)
    v_sqv = _nanvar(panel.as_array()[:, 1:])
    floors = {"sigma2_y1": variance_floor * v_target, "sigma2_x1": variance_floor * v_target,
              "sigma2_y2": variance_floor * v_sqv, "sigma2_x2": variance_floor * v_sqv}
    return _m_step_nhnr(stats, data, floors)


class _Dlm0Model:
    """Random walk plus monthly effects observed with noise (no search volume)."""

    name = "dlm0"

    def __init__(self, series: MonthlySeries, config: EmConfig):
        self.config = config
        self.y = np.ascontiguousarray(series.values.reshape(-1, 1))
        self.months = month_numbers(series.start, len(series))
        v = _nanvar(series.values)
        self.floors = {"sigma2_y": config.variance_floor * v, "sigma2_x": config.variance_floor * v}

    def spec(self, params: Dlm0Params) -> StateSpaceSpec:
        return build_dlm0(params, self.config.initial)

    def filter(self, params: Dlm0Params):
        spec = self.spec(params)
        filt = filter_arrays(spec, self.y, self.months)
        return spec, filt, filt.loglik

    def m_step(self, stats: SufficientStats, params: Dlm0Params) -> Dlm0Params:
        T = stats.cross.shape[0]
        theta, ss = _row_regression(stats, 0, coupled=None)
        x0 = float(theta[12]) if stats.initial_fixed else float(stats.mean[0, 0])
        y = self.y[:, 0]
        obs = ~np.isnan(y)
        m = stats.mean[1:, 0]
        P = stats.cov[1:, 0, 0]
        s_y = float(np.mean((y[obs] - m[obs]) ** 2 + P[obs])) if obs.any() else self.floors["sigma2_y"]
        return Dlm0Params(max(s_y, self.floors["sigma2_y"]), max(ss / T, self.floors["sigma2_x"]),
                          theta[:12], x0)

    def random_start(self, rng: np.random.Generator) -> Dlm0Params:
        v = _nanvar(np.diff(self.y[:, 0]))

        def logu(lo, hi):
            return math.exp(rng.uniform(math.log(lo), math.log(hi)))

        return Dlm0Params(max(v * logu(0.01, 1.0), self.floors["sigma2_y"]),
                          max(v * logu(0.01, 1.0), self.floors["sigma2_x"]),
                          np.zeros(12), _first_finite(self.y[:, 0]))

    names = ("sigma2_y", "sigma2_x") + tuple(f"C[{j}]" for j in range(12)) + ("x0",)
    log_scale = (True, True) + (False,) * 13

    def pack(self, p: Dlm0Params) -> np.ndarray:
        return np.concatenate([[p.sigma2_y, p.sigma2_x], p.C, [p.x0]])

    def unpack(self, v) -> Dlm0Params:
        return Dlm0Params(v[0], v[1], v[2:14], v[14])


def _em_iterations(model, params, n_iter, rel_tol, trace, state=None):
    """Run up to ``n_iter`` EM updates, appending to ``trace``.

    Trace entry k is the log-likelihood of the k-th parameter iterate. ``state``
    resumes from a previous call's final (params, spec, filter) without
    re-evaluating it. Returns (final state, best params, converged, M-steps).
    """
    if state is None:
        spec, filt, ll = model.filter(params)
        trace.append(ll)
    else:
        params, spec, filt = state
    best, best_ll = params, trace[-1]
    for it in range(n_iter):
        stats = _stats_from(filt, spec, trace[-1])
        params = model.m_step(stats, params)
        spec, filt, ll = model.filter(params)
        trace.append(ll)
        if ll >= best_ll:
            best, best_ll = params, ll
        if abs(trace[-1] - trace[-2]) < rel_tol * abs(trace[-2]):
            return (params, spec, filt), best, True, it + 1
    return (params, spec, filt), best, False, n_iter


def _run_fit(model, config: EmConfig):
    starts = []
    failures = {}
    n_warm = min(config.warmup_iterations, config.max_iterations)
    for i in range(config.n_starts):
        rng = np.random.default_rng([config.seed, i])
        trace = []
        try:
            p0 = model.random_start(rng)
            state, best, conv, used = _em_iterations(model, p0, n_warm, config.rel_tol, trace)
            if not np.all(np.isfinite(trace)):
                raise EstimationError("non-finite log-likelihood")
            starts.append((i, trace, state, best, conv, used))
        except (SqvDlmError, np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            failures[i] = str(exc).splitlines()[0]
    if not starts:
        raise EstimationError("no starting value produced a finite likelihood",
                              {f"start {k}": v for k, v in failures.items()})

    i, trace, state, best, conv, used = max(starts, key=lambda e: (max(e[1]), -e[0]))
    if not conv and used < config.max_iterations:
        _, best_more, conv, more = _em_iterations(
            model, None, config.max_iterations - used, config.rel_tol, trace, state,
        )
        used += more
        if model.filter(best_more)[2] >= model.filter(best)[2]:
            best = best_more
    diagnostics = [{"start": e[0], "loglik": float(max(e[1])), "error": None} for e in starts]
    diagnostics += [{"start": k, "loglik": None, "error": v} for k, v in failures.items()]
    diagnostics.sort(key=lambda d: d["start"])
    return best, trace, conv, used, diagnostics


def _loglik_function(model) -> Callable:
    def fun(params):
        return model.filter(params)[2]

    return fun


def numerical_hessian(fun: Callable, theta, steps) -> np.ndarray:
    """Central-difference Hessian of a scalar function."""
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    f0 = fun(theta)
    H = np.empty((n, n))
    shifted = {}

    def f_at(*moves):
        key = tuple(sorted(moves))
        if key not in shifted:
            x = theta.copy()
            for j, sgn in moves:
                x[j] += sgn * steps[j]
            shifted[key] = fun(x)
        return shifted[key]

    for i in range(n):
        H[i, i] = (f_at((i, 1)) - 2.0 * f0 + f_at((i, -1))) / steps[i] ** 2
        for j in range(i):
            val = (f_at((i, 1), (j, 1)) - f_at((i, 1), (j, -1))
                   - f_at((i, -1), (j, 1)) + f_at((i, -1), (j, -1))) / (4.0 * steps[i] * steps[j])
            H[i, j] = H[j, i] = val
    return H


def hessian_ci_from_loglik(fun: Callable, theta_hat, level: float = 0.95, log_scale=None,
                           names=None) -> HessianCI:
    """Asymptotic-Normal intervals from the curvature of ``fun`` at its maximum.

    Coordinates flagged in ``log_scale`` are differentiated in log space and the
    interval is mapped back with ``exp``.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    theta_hat = np.asarray(theta_hat, dtype=float)
    n = theta_hat.size
    log_scale = np.zeros(n, bool) if log_scale is None else np.asarray(log_scale, bool)
    names = tuple(names) if names is not None else tuple(f"theta[{i}]" for i in range(n))
    if np.any(theta_hat[log_scale] <= 0):
        raise ValueError("log-scale coordinates must be positive")
    phi_hat = np.where(log_scale, np.log(np.where(log_scale, theta_hat, 1.0)), theta_hat)

    def to_natural(phi):
        return np.where(log_scale, np.exp(phi), phi)

    steps = 1e-4 * np.maximum(1.0, np.abs(phi_hat))
    H = numerical_hessian(lambda phi: fun(to_natural(phi)), phi_hat, steps)
    info = -0.5 * (H + H.T)
    # unit diagonal first so the rank tolerance is not driven by parameter units
    d = np.diag(info)
    scale = np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 1.0)
    eigval, eigvec = np.linalg.eigh(scale[:, None] * info * scale[None, :])
    tol = 1e-10 * max(1.0, np.abs(eigval).max())
    good = eigval > tol
    reliable = bool(good.all())
    cov = scale[:, None] * ((eigvec[:, good] / eigval[good]) @ eigvec[:, good].T) * scale[None, :]
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    if not reliable:
        warnings.warn("Hessian is not negative definite; intervals use the stable subspace",
                      RuntimeWarning, stacklevel=2)
        loading = (eigvec[:, ~good] ** 2).sum(axis=1)
        se = np.where(loading > 1e-6, np.inf, se)
    z = norm.ppf(0.5 + level / 2)
    lo, hi = phi_hat - z * se, phi_hat + z * se
    with np.errstate(over="ignore"):
        lower = np.where(log_scale, np.exp(lo), lo)
        upper = np.where(log_scale, np.exp(hi), hi)
    return HessianCI(names, theta_hat, lower, upper, se, level, reliable)


def _model_ci(model, params, level):
    fun = _loglik_function(model)
    return hessian_ci_from_loglik(
        lambda v: fun(model.unpack(v)), model.pack(params), level, model.log_scale, model.names,
    )


def hessian_ci(panel: ObservationPanel, params: DlmParams, level: float = 0.95,
               initial: str = "fixed") -> HessianCI:
    model = _NhnrModel(panel, EmConfig(initial=initial))
    return _model_ci(model, params, level)


def _report(model, config, a):
    best, trace, conv, used, diagnostics = _run_fit(model, config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ci = _model_ci(model, best, config.level)
    return FitReport(
        params=best,
        loglik_trace=[float(v) for v in trace],
        converged=conv,
        iterations_used=used,
        ci=ci.as_dict(),
        se={n: float(s) for n, s in zip(ci.names, ci.se)},
        ci_level=config.level,
        ci_reliable=ci.reliable,
        start_diagnostics=diagnostics,
        config=config,
        model=model.name,
        a=a,
    )


def fit(panel: ObservationPanel, a: Optional[int] = None, config: EmConfig = EmConfig()) -> FitReport:
    """Multistart EM fit of the replicated model to a (demeaned) panel."""
    a = panel.a if a is None else a
    if a != panel.a:
        raise ValueError(f"panel has {panel.a} replicates, expected {a}")
    model = _NhnrModel(panel, config)
    report = _report(model, config, a)
    report.model = "dlm1" if a > 1 else "dlm2"
    return report


def fit_dlm0(series: MonthlySeries, config: EmConfig = EmConfig()) -> FitReport:
    """Multistart EM fit of the single-state model to a (demeaned) series."""
    return _report(_Dlm0Model(series, config), config, 0)


def em_loglik(panel: ObservationPanel, params: DlmParams, initial: str = "fixed") -> float:
    """Log-likelihood via the replicate-collapsed filter (equals the full filter)."""
    return _NhnrModel(panel, EmConfig(initial=initial)).filter(params)[2]


def run_em(panel: ObservationPanel, params: DlmParams, iterations: int,
           config: EmConfig = EmConfig()):
    """Plain EM from a given start; returns (params, trace, converged)."""
    model = _NhnrModel(panel, config)
    trace = []
    _, best, conv, _ = _em_iterations(model, params, iterations, config.rel_tol, trace)
    return best, trace, conv
