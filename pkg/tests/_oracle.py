"""Brute-force joint-Gaussian reference for the Kalman recursions.

Builds the full mean and covariance of (x_0, x_1..x_T, y_1..y_T) by unrolling
the state equation, then conditions on the observed entries directly.
"""
import numpy as np
from scipy.stats import multivariate_normal


def joint_moments(spec, months, T):
    q, m = spec.q, spec.m
    n_x = (T + 1) * q
    # latent draws: x_0, w_1..w_T, v_1..v_T
    n_z = (T + 1) * q + T * m
    A = np.zeros((n_x + T * m, n_z))
    b = np.zeros(n_x + T * m)
    A[:q, :q] = np.eye(q)
    b[:q] = spec.x0
    for t in range(1, T + 1):
        rows = slice(t * q, (t + 1) * q)
        prev = slice((t - 1) * q, t * q)
        A[rows] = spec.G @ A[prev]
        A[rows, t * q:(t + 1) * q] += np.eye(q)
        b[rows] = spec.G @ b[prev] + spec.C[:, months[t - 1] - 1]
    for t in range(1, T + 1):
        rows = slice(n_x + (t - 1) * m, n_x + t * m)
        xs = slice(t * q, (t + 1) * q)
        A[rows] = spec.F @ A[xs]
        A[rows, n_x + (t - 1) * m:n_x + t * m] += np.eye(m)
        b[rows] = spec.F @ b[xs]
    Z = np.zeros((n_z, n_z))
    Z[:q, :q] = spec.P0
    for t in range(1, T + 1):
        Z[t * q:(t + 1) * q, t * q:(t + 1) * q] = spec.W
        o = n_x + (t - 1) * m
        Z[o:o + m, o:o + m] = spec.V
    return b, A @ Z @ A.T, n_x


def oracle(spec, y, months):
    """Return (loglik, smoothed means (T+1,q), smoothed joint cov of states)."""
    T, m = y.shape
    q = spec.q
    mu, S, n_x = joint_moments(spec, months, T)
    yflat = y.reshape(-1)
    obs = n_x + np.flatnonzero(~np.isnan(yflat))
    xi = np.arange(n_x)
    if obs.size == 0:
        return 0.0, mu[:n_x].reshape(T + 1, q), S[:n_x, :n_x]
    Syy = S[np.ix_(obs, obs)]
    ll = multivariate_normal(mu[obs], Syy, allow_singular=False).logpdf(yflat[obs - n_x])
    Sxy = S[np.ix_(xi, obs)]
    gain = np.linalg.solve(Syy, Sxy.T).T
    mean = mu[:n_x] + gain @ (yflat[obs - n_x] - mu[obs])
    cov = S[:n_x, :n_x] - gain @ Sxy.T
    return float(ll), mean.reshape(T + 1, q), cov
