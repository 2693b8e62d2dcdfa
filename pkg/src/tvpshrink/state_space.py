"""
Forward filtering, backward sampling for the non-centered coefficient paths.

Model (t = 1..T, state dimension K)::

    obs_t = loadings_t' b_t + e_t,          e_t ~ N(0, obs_var_t)
    b_t   = b_{t-1} + eta_t,                eta_t ~ N(0, diag(state_var_t))
    b_0   = 0

The filter runs in covariance form with a scalar update per period.  The
kernels are compiled with numba; standard normals for the backward pass are
pre-drawn from the caller's Generator so the stream stays in numpy.
"""

from dataclasses import dataclass
import math

import numba
import numpy as np

from .errors import NumericalError, ParameterError

__all__ = ["SsmInputs", "StatePath", "ffbs_draw", "marginal_loglik", "kalman_filter"]


@dataclass
class SsmInputs:
    obs: np.ndarray        # (T,)
    loadings: np.ndarray   # (T, K)
    obs_var: np.ndarray    # (T,)
    state_var: np.ndarray  # (T, K)

    def __post_init__(self):
        self.obs = np.ascontiguousarray(self.obs, dtype=float)
        self.loadings = np.ascontiguousarray(np.atleast_2d(self.loadings), dtype=float)
        if self.loadings.shape[0] != self.obs.shape[0] and self.loadings.shape[1] == self.obs.shape[0]:
            raise ParameterError("loadings must be shaped (T, K)")
        self.obs_var = np.ascontiguousarray(self.obs_var, dtype=float)
        self.state_var = np.ascontiguousarray(np.atleast_2d(self.state_var), dtype=float)
        T, K = self.loadings.shape
        if self.obs.shape != (T,) or self.obs_var.shape != (T,) or self.state_var.shape != (T, K):
            raise ParameterError(
                f"inconsistent dimensions: obs {self.obs.shape}, loadings {self.loadings.shape}, "
                f"obs_var {self.obs_var.shape}, state_var {self.state_var.shape}"
            )
        if not (np.all(self.obs_var > 0) and np.all(self.state_var > 0)):
            raise ParameterError("observation and state variances must be strictly positive")

    @property
    def T(self):
        return self.loadings.shape[0]

    @property
    def K(self):
        return self.loadings.shape[1]


@dataclass
class StatePath:
    b: np.ndarray  # (T, K)


@numba.njit(cache=True)
def _psd_cholesky(A):
    # lower factor of a symmetric PSD matrix; non-positive pivots are zeroed
    n = A.shape[0]
    L = np.zeros_like(A)
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= 0.0:
            continue
        d = math.sqrt(s)
        L[j, j] = d
        for i in range(j + 1, n):
            v = A[i, j]
            for k in range(j):
                v -= L[i, k] * L[j, k]
            L[i, j] = v / d
    return L


@numba.njit(cache=True)
def _forward(obs, L, R, Q, keep):
    T, K = L.shape
    m = np.zeros((T, K))
    P = np.zeros((T, K, K)) if keep else np.zeros((1, K, K))
    m_prev = np.zeros(K)
    P_prev = np.zeros((K, K))
    loglik = 0.0
    for t in range(T):
        Pp = P_prev.copy()
        for j in range(K):
            Pp[j, j] += Q[t, j]
        PL = Pp @ L[t]
        F = R[t]
        e = obs[t]
        for j in range(K):
            F += L[t, j] * PL[j]
            e -= L[t, j] * m_prev[j]
        if not (F > 0.0) or not math.isfinite(F):
            return m, P, loglik, t
        g = PL / F
        mt = m_prev + g * e
        Pt = Pp - np.outer(g, PL)
        Pt = 0.5 * (Pt + Pt.T)
        for j in range(K):
            if not math.isfinite(mt[j]):
                return m, P, loglik, t
        loglik += -0.5 * (math.log(2.0 * math.pi * F) + e * e / F)
        m[t] = mt
        if keep:
            P[t] = Pt
        m_prev = mt
        P_prev = Pt
    return m, P, loglik, -1


@numba.njit(cache=True)
def _backward(m, P, Q, z):
    T, K = m.shape
    b = np.zeros((T, K))
    C = _psd_cholesky(P[T - 1])
    b[T - 1] = m[T - 1] + C @ z[T - 1]
    for t in range(T - 2, -1, -1):
        Pt = P[t]
        Pp = Pt.copy()
        for j in range(K):
            Pp[j, j] += Q[t + 1, j]
        # J = Pt Pp^{-1}; Pp is symmetric positive definite since Q > 0
        J = np.linalg.solve(Pp, Pt).T
        mean = m[t] + J @ (b[t + 1] - m[t])
        cov = Pt - J @ Pt
        cov = 0.5 * (cov + cov.T)
        C = _psd_cholesky(cov)
        b[t] = mean + C @ z[t]
    return b


def _check_status(status):
    if status >= 0:
        raise NumericalError(f"Kalman filter breakdown at time index {status}", index=int(status))


def kalman_filter(inputs: SsmInputs):
    """Filtered means ``(T, K)``, covariances ``(T, K, K)`` and log-likelihood."""
    m, P, ll, status = _forward(inputs.obs, inputs.loadings, inputs.obs_var, inputs.state_var, True)
    _check_status(status)
    return m, P, ll


def marginal_loglik(inputs: SsmInputs) -> float:
    """log p(obs | loadings, variances) by prediction-error decomposition."""
    if inputs.K == 0:
        return float(-0.5 * np.sum(np.log(2 * np.pi * inputs.obs_var) + inputs.obs**2 / inputs.obs_var))
    _, _, ll, status = _forward(inputs.obs, inputs.loadings, inputs.obs_var, inputs.state_var, False)
    _check_status(status)
    return float(ll)


def ffbs_draw(inputs: SsmInputs, rng: np.random.Generator) -> StatePath:
    """Exact joint draw of b_{1:T} given observations (Carter-Kohn)."""
    T, K = inputs.T, inputs.K
    if K == 0:
        return StatePath(np.zeros((T, 0)))
    m, P, _, status = _forward(inputs.obs, inputs.loadings, inputs.obs_var, inputs.state_var, True)
    _check_status(status)
    z = rng.standard_normal((T, K))
    b = _backward(m, P, inputs.state_var, z)
    if not np.all(np.isfinite(b)):
        bad = int(np.argmax(~np.isfinite(b).all(axis=1)))
        raise NumericalError(f"non-finite state draw at time index {bad}", index=bad)
    return StatePath(b)
