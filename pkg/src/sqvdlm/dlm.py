"""Linear Gaussian state-space model with fixed monthly effects in the state equation.

    y_t = F x_t + v_t,                 v_t ~ N(0, V)
    x_t = G x_{t-1} + C s_t + w_t,     w_t ~ N(0, W)

``s_t`` is the calendar-month indicator of time t. The replicated-search-volume
instantiation has two states (true target, true search volume), ``G`` coupling
the lagged search volume into the target with coefficient ``beta``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from ._kernels import filter_kernel, smoother_kernel
from .errors import DegeneracyError, ParameterDomainError
from .series import ObservationPanel

DIFFUSE_VARIANCE = 1e7
PSD_TOL = 1e-10


def _readonly(x, ndim=None):
    arr = np.array(x, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_psd(name, M):
    if not np.allclose(M, M.T, atol=PSD_TOL * max(1.0, np.abs(M).max())):
        raise ParameterDomainError(f"{name} is not symmetric")
    eig = np.linalg.eigvalsh(M)
    if eig.size and eig.min() < -PSD_TOL * max(1.0, np.abs(eig).max()):
        raise ParameterDomainError(f"{name} is not positive semidefinite")


@dataclass(frozen=True, eq=False)
class StateSpaceSpec:
    F: np.ndarray
    G: np.ndarray
    C: np.ndarray
    V: np.ndarray
    W: np.ndarray
    x0: np.ndarray
    P0: np.ndarray

    def __post_init__(self):
        for name, nd in (("F", 2), ("G", 2), ("C", 2), ("V", 2), ("W", 2), ("x0", 1), ("P0", 2)):
            object.__setattr__(self, name, _readonly(getattr(self, name), nd))
        m, q = self.F.shape
        shapes = {"G": (q, q), "C": (q, 12), "V": (m, m), "W": (q, q), "x0": (q,), "P0": (q, q)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        for name in ("V", "W", "P0"):
            _check_psd(name, getattr(self, name))

    @property
    def m(self) -> int:
        return self.F.shape[0]

    @property
    def q(self) -> int:
        return self.F.shape[1]

    @property
    def fixed_initial_state(self) -> bool:
        return not np.any(self.P0)


@dataclass(frozen=True, eq=False)
class DlmParams:
    """Free parameters of the two-state replicated model."""

    beta: float
    sigma2_y1: float
    sigma2_y2: float
    sigma2_x1: float
    sigma2_x2: float
    C: np.ndarray = field(default_factory=lambda: np.zeros((2, 12)))
    x0: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "C", _readonly(self.C, 2))
        object.__setattr__(self, "x0", _readonly(self.x0, 1))
        if self.C.shape != (2, 12) or self.x0.shape != (2,):
            raise ValueError("C must be 2x12 and x0 a 2-vector")
        for name in ("beta",) + self.variance_names:
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ParameterDomainError(f"{name} is not finite")
            if name != "beta" and value < 0:
                raise ParameterDomainError(f"{name} is negative")
            object.__setattr__(self, name, value)

    variance_names = ("sigma2_y1", "sigma2_y2", "sigma2_x1", "sigma2_x2")

    def __eq__(self, other):
        if not isinstance(other, DlmParams):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            **{k: getattr(self, k) for k in self.variance_names},
            "C": self.C.tolist(),
            "x0": self.x0.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "DlmParams":
        return cls(
            d["beta"], d["sigma2_y1"], d["sigma2_y2"], d["sigma2_x1"], d["sigma2_x2"],
            np.array(d.get("C", np.zeros((2, 12)))), np.array(d.get("x0", np.zeros(2))),
        )


@dataclass(frozen=True, eq=False)
class Dlm0Params:
    """Single-state (no search volume) model: random walk plus monthly effects."""

    sigma2_y: float
    sigma2_x: float
    C: np.ndarray = field(default_factory=lambda: np.zeros(12))
    x0: float = 0.0

    variance_names = ("sigma2_y", "sigma2_x")

    def __post_init__(self):
        object.__setattr__(self, "C", _readonly(np.ravel(self.C), 1))
        if self.C.shape != (12,):
            raise ValueError("C must have 12 entries")
        object.__setattr__(self, "x0", float(self.x0))

    def to_dict(self) -> dict:
        return {"sigma2_y": self.sigma2_y, "sigma2_x": self.sigma2_x,
                "C": self.C.tolist(), "x0": self.x0}

    @classmethod
    def from_dict(cls, d) -> "Dlm0Params":
        return cls(d["sigma2_y"], d["sigma2_x"], np.array(d["C"]), d["x0"])


def _initial_cov(q, initial):
    if initial == "fixed":
        return np.zeros((q, q))
    if initial == "diffuse":
        return DIFFUSE_VARIANCE * np.eye(q)
    raise ValueError(f"initial must be 'fixed' or 'diffuse', got {initial!r}")


def _require_positive(params):
    for name in params.variance_names:
        if not getattr(params, name) > 0:
            raise ParameterDomainError(f"{name} must be positive, got {getattr(params, name)}")


def build_nhnr_dlm(params: DlmParams, a: int, initial: str = "fixed") -> StateSpaceSpec:
    """Target row (1, 0) plus ``a`` replicate rows (0, 1); shared replicate variance."""
    if a < 1:
        raise ParameterDomainError(f"replicate count must be >= 1, got {a}")
    _require_positive(params)
    F = np.zeros((a + 1, 2))
    F[0, 0] = 1.0
    F[1:, 1] = 1.0
    G = np.array([[1.0, params.beta], [0.0, 1.0]])
    V = np.diag([params.sigma2_y1] + [params.sigma2_y2] * a)
    W = np.diag([params.sigma2_x1, params.sigma2_x2])
    return StateSpaceSpec(F, G, params.C, V, W, params.x0, _initial_cov(2, initial))


def build_dlm0(params: Dlm0Params, initial: str = "fixed") -> StateSpaceSpec:
    _require_positive(params)
    return StateSpaceSpec(
        np.ones((1, 1)), np.ones((1, 1)), params.C.reshape(1, 12),
        np.array([[params.sigma2_y]]), np.array([[params.sigma2_x]]),
        np.array([params.x0]), _initial_cov(1, initial),
    )


@dataclass(frozen=True, eq=False)
class FilterResult:
    predicted_mean: np.ndarray
    predicted_cov: np.ndarray
    filtered_mean: np.ndarray
    filtered_cov: np.ndarray
    innovations: np.ndarray
    innovation_cov: np.ndarray
    n_observed: np.ndarray
    loglik: float
    months: np.ndarray

    def __len__(self):
        return self.filtered_mean.shape[0]


@dataclass(frozen=True, eq=False)
class SmootherResult:
    mean: np.ndarray
    cov: np.ndarray
    lag_one_cov: np.ndarray
    initial_mean: np.ndarray
    initial_cov: np.ndarray


def _as_arrays(panel):
    if isinstance(panel, ObservationPanel):
        return panel.as_array(), panel.months
    y, months = panel
    return np.asarray(y, dtype=float), np.asarray(months)


def state_intercepts(C, months) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(C)[:, np.asarray(months) - 1].T)


def filter_arrays(spec: StateSpaceSpec, y, months, F_t=None, V_t=None) -> FilterResult:
    """Kalman filter on a (T, m) array; ``F_t``/``V_t`` override the model matrices per time step."""
    y = np.ascontiguousarray(y, dtype=float)
    if y.ndim != 2 or y.shape[1] != spec.m:
        raise ValueError(f"observations have shape {y.shape}, model expects (T, {spec.m})")
    T = y.shape[0]
    months = np.asarray(months)
    if F_t is None:
        F_t = np.broadcast_to(spec.F, (T,) + spec.F.shape)
    if V_t is None:
        V_t = np.broadcast_to(spec.V, (T,) + spec.V.shape)
    out = filter_kernel(
        y, np.ascontiguousarray(F_t), np.ascontiguousarray(spec.G), np.ascontiguousarray(spec.W),
        np.ascontiguousarray(V_t), state_intercepts(spec.C, months),
        np.ascontiguousarray(spec.x0), np.ascontiguousarray(spec.P0),
    )
    xp, Pp, xf, Pf, innov, S, nobs, loglik, status = out
    if status >= 0:
        raise DegeneracyError(int(status) + 1)
    return FilterResult(xp, Pp, xf, Pf, innov, S, nobs, float(loglik), months)


def kalman_filter(spec: StateSpaceSpec, panel) -> FilterResult:
    """Filter an :class:`ObservationPanel` (or a ``(y, months)`` pair)."""
    y, months = _as_arrays(panel)
    return filter_arrays(spec, y, months)


def kalman_smoother(spec: StateSpaceSpec, filt: FilterResult) -> SmootherResult:
    if filt.predicted_mean.shape[1] != spec.q or len(filt) < 1:
        raise ValueError("filter result does not match the model")
    xs, Ps, cross = smoother_kernel(
        filt.predicted_mean, filt.predicted_cov, filt.filtered_mean, filt.filtered_cov,
        np.ascontiguousarray(spec.G), np.ascontiguousarray(spec.x0), np.ascontiguousarray(spec.P0),
    )
    return SmootherResult(xs[1:], Ps[1:], cross, xs[0], Ps[0])


def loglik(spec: StateSpaceSpec, panel) -> float:
    return kalman_filter(spec, panel).loglik


@dataclass(frozen=True, eq=False)
class ForecastResult:
    horizon: np.ndarray
    months: np.ndarray
    level: float
    target_mean: np.ndarray
    target_var: np.ndarray
    target_lower: np.ndarray
    target_upper: np.ndarray
    sqv_mean: Optional[np.ndarray] = None
    sqv_var: Optional[np.ndarray] = None
    sqv_lower: Optional[np.ndarray] = None
    sqv_upper: Optional[np.ndarray] = None
    offsets_applied: bool = False

    @property
    def interval_length(self) -> np.ndarray:
        return self.target_upper - self.target_lower


def forecast(spec: StateSpaceSpec, filt: FilterResult, H: int, level: float = 0.95,
             offsets=None) -> ForecastResult:
    """Propagate the last filtered moments ``H`` steps with no further updates."""
    if H < 1:
        raise ValueError("horizon must be >= 1")
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    last_month = int(filt.months[-1])
    months = (last_month + np.arange(H)) % 12 + 1
    x = filt.filtered_mean[-1].copy()
    P = filt.filtered_cov[-1].copy()
    means = np.empty((H, spec.q))
    covs = np.empty((H, spec.q, spec.q))
    for h in range(H):
        x = spec.G @ x + spec.C[:, months[h] - 1]
        P = spec.G @ P @ spec.G.T + spec.W
        P = 0.5 * (P + P.T)
        means[h], covs[h] = x, P
    z = norm.ppf(0.5 + level / 2)
    target_offset = sqv_offset = 0.0
    if offsets is not None:
        target_offset = float(offsets[0])
        sqv_offset = float(np.mean(offsets[1:])) if len(offsets) > 1 else 0.0
    t_mean = means[:, 0] + target_offset
    t_var = covs[:, 0, 0] + spec.V[0, 0]
    extra = {}
    if spec.q > 1 and spec.m > 1:
        s_mean = means[:, 1] + sqv_offset
        s_var = covs[:, 1, 1] + spec.V[1, 1]
        extra = dict(sqv_mean=s_mean, sqv_var=s_var,
                     sqv_lower=s_mean - z * np.sqrt(s_var), sqv_upper=s_mean + z * np.sqrt(s_var))
    return ForecastResult(
        np.arange(1, H + 1), months, level, t_mean, t_var,
        t_mean - z * np.sqrt(t_var), t_mean + z * np.sqrt(t_var),
        offsets_applied=offsets is not None, **extra,
    )
