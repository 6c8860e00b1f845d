"""Compiled Kalman recursions.

Arrays are indexed by time 0..T-1 for observation times 1..T. ``Ft`` and ``Vt``
are per-time observation matrices, ``u`` the per-time state intercept (the
fixed seasonal effect). A non-negative ``status`` reports the time index at
which the innovation covariance failed the conditioning check.
"""
import numpy as np
from numba import njit

COND_THRESHOLD = 1e-12
LOG_2PI = np.log(2.0 * np.pi)


@njit(cache=True)
def _cholesky(S, tol):
    k = S.shape[0]
    L = np.zeros((k, k))
    scale = 0.0
    for i in range(k):
        if S[i, i] > scale:
            scale = S[i, i]
    if scale <= 0.0:
        return L, False
    for j in range(k):
        d = S[j, j]
        for p in range(j):
            d -= L[j, p] * L[j, p]
        if d <= tol * scale:
            return L, False
        L[j, j] = np.sqrt(d)
        for i in range(j + 1, k):
            s = S[i, j]
            for p in range(j):
                s -= L[i, p] * L[j, p]
            L[i, j] = s / L[j, j]
    return L, True


@njit(cache=True)
def _chol_solve(L, B):
    """Solve (L L') X = B for X, B of shape (k, n)."""
    k, n = B.shape
    X = B.copy()
    for c in range(n):
        for i in range(k):
            s = X[i, c]
            for p in range(i):
                s -= L[i, p] * X[p, c]
            X[i, c] = s / L[i, i]
        for i in range(k - 1, -1, -1):
            s = X[i, c]
            for p in range(i + 1, k):
                s -= L[p, i] * X[p, c]
            X[i, c] = s / L[i, i]
    return X


@njit(cache=True)
def _mm(A, B):
    n, k = A.shape
    p = B.shape[1]
    out = np.zeros((n, p))
    for i in range(n):
        for r in range(k):
            a = A[i, r]
            if a != 0.0:
                for j in range(p):
                    out[i, j] += a * B[r, j]
    return out


@njit(cache=True)
def _mv(A, x):
    n, k = A.shape
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        for r in range(k):
            s += A[i, r] * x[r]
        out[i] = s
    return out


@njit(cache=True)
def filter_kernel(y, Ft, G, W, Vt, u, x0, P0):
    T, m = y.shape
    q = G.shape[0]
    xp = np.empty((T, q))
    Pp = np.empty((T, q, q))
    xf = np.empty((T, q))
    Pf = np.empty((T, q, q))
    innov = np.full((T, m), np.nan)
    S_all = np.full((T, m, m), np.nan)
    nobs = np.zeros(T, dtype=np.int64)
    loglik = 0.0
    x = x0.copy()
    P = P0.copy()
    GT = np.ascontiguousarray(G.T)
    obs_buf = np.empty(m, dtype=np.int64)
    all_idx = np.arange(m)
    for t in range(T):
        x = _mv(G, x) + u[t]
        P = _mm(_mm(G, P), GT) + W
        P = 0.5 * (P + P.T)
        xp[t] = x
        Pp[t] = P
        k = 0
        for i in range(m):
            if not np.isnan(y[t, i]):
                obs_buf[k] = i
                k += 1
        nobs[t] = k
        if k > 0:
            if k == m:
                obs = all_idx
                F = Ft[t]
                V = Vt[t]
            else:
                obs = obs_buf[:k].copy()
                F = Ft[t][obs]
                V = Vt[t][obs][:, obs]
            e = np.empty(k)
            for i in range(k):
                e[i] = y[t, obs[i]]
            e -= _mv(F, x)
            PFt = _mm(P, np.ascontiguousarray(F.T))
            S = _mm(F, PFt) + V
            S = 0.5 * (S + S.T)
            L, ok = _cholesky(S, COND_THRESHOLD)
            if not ok:
                return xp, Pp, xf, Pf, innov, S_all, nobs, loglik, t
            # K' = S^-1 F P
            Kt = _chol_solve(L, PFt.T)
            e2 = e.reshape((k, 1))
            Se = _chol_solve(L, e2)
            x = x + _mm(PFt, Se)[:, 0]
            P = P - _mm(PFt, Kt)
            P = 0.5 * (P + P.T)
            logdet = 0.0
            for i in range(k):
                logdet += 2.0 * np.log(L[i, i])
            quad = 0.0
            for i in range(k):
                quad += e[i] * Se[i, 0]
            loglik += -0.5 * (k * LOG_2PI + logdet + quad)
            for i in range(k):
                innov[t, obs[i]] = e[i]
                for j in range(k):
                    S_all[t, obs[i], obs[j]] = S[i, j]
        xf[t] = x
        Pf[t] = P
    return xp, Pp, xf, Pf, innov, S_all, nobs, loglik, -1


@njit(cache=True)
def smoother_kernel(xp, Pp, xf, Pf, G, x0, P0):
    """Rauch-Tung-Striebel pass; index 0 of the outputs is the initial state."""
    T, q = xf.shape
    G = np.ascontiguousarray(G)
    xs = np.empty((T + 1, q))
    Ps = np.empty((T + 1, q, q))
    cross = np.empty((T, q, q))
    xs[T] = xf[T - 1]
    Ps[T] = Pf[T - 1]
    for t in range(T - 1, -1, -1):
        if t == 0:
            xft = x0
            Pft = P0
        else:
            xft = xf[t - 1]
            Pft = Pf[t - 1]
        # J' = Pp^-1 G Pf
        GPf = _mm(G, Pft)
        L, ok = _cholesky(Pp[t], COND_THRESHOLD)
        if ok:
            JT = _chol_solve(L, GPf)
        else:
            JT = _mm(np.linalg.pinv(Pp[t]), GPf)
        J = np.ascontiguousarray(JT.T)
        xs[t] = xft + _mv(J, xs[t + 1] - xp[t])
        P = Pft + _mm(_mm(J, Ps[t + 1] - Pp[t]), JT)
        Ps[t] = 0.5 * (P + P.T)
        cross[t] = _mm(Ps[t + 1], JT)
    return xs, Ps, cross


@njit(cache=True)
def arma_filter_kernel(w, a, R, P0):
    """Kalman filter for a scalar ARMA model in companion form.

    ``a`` is the (length r) first column of the transition, ``R`` the noise
    loading; exploiting the shift structure makes each step O(r^2).
    Returns innovations, their variances, the one-step predicted state after
    the last observation, and a status flag.
    """
    T = w.shape[0]
    r = a.shape[0]
    innov = np.empty(T)
    S_all = np.empty(T)
    x = np.zeros(r)
    P = P0.copy()
    A = np.empty((r, r))
    scale = 0.0
    for i in range(r):
        if P0[i, i] > scale:
            scale = P0[i, i]
    for t in range(T):
        S = P[0, 0]
        if not S > COND_THRESHOLD * scale:
            return innov, S_all, x, t
        e = w[t] - x[0]
        innov[t] = e
        S_all[t] = S
        col = P[:, 0].copy()
        for i in range(r):
            x[i] += col[i] / S * e
        for i in range(r):
            pi = col[i] / S
            for j in range(r):
                P[i, j] -= pi * col[j]
        # predict: x <- G x, P <- G P G' + R R'
        x0 = x[0]
        for i in range(r - 1):
            x[i] = a[i] * x0 + x[i + 1]
        x[r - 1] = a[r - 1] * x0
        for i in range(r):
            nxt = i + 1 < r
            for j in range(r):
                A[i, j] = a[i] * P[0, j] + (P[i + 1, j] if nxt else 0.0)
        for i in range(r):
            for j in range(r):
                v = A[i, 0] * a[j] + (A[i, j + 1] if j + 1 < r else 0.0) + R[i] * R[j]
                P[i, j] = v
        for i in range(r):
            for j in range(i + 1, r):
                s = 0.5 * (P[i, j] + P[j, i])
                P[i, j] = s
                P[j, i] = s
    return innov, S_all, x, -1
