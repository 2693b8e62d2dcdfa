"""
Stochastic volatility block: latent log-variances and their AR(1) parameters.

    r_t | h_t ~ N(0, exp(h_t)),  h_t = mu + rho (h_{t-1} - mu) + sigma_h u_t,
    h_0 ~ N(mu, sigma_h^2 / (1 - rho^2))

Sampling uses the 10-component normal mixture for log chi^2_1 of Omori, Chib,
Shephard & Nakajima (2007), a joint draw of h_{0:T} from its tridiagonal
Gaussian conditional, and ancillarity-sufficiency interweaving of the
parameter updates (centered step, then non-centered step).
"""

from dataclasses import dataclass, field, replace
import logging

import numpy as np
from scipy import linalg
from scipy.special import betaln

from .errors import ParameterError, NumericalError
from .rngdist import draw_gig

__all__ = [
    "MIX_WEIGHTS",
    "MIX_MEANS",
    "MIX_VARS",
    "LOG_OFFSET",
    "SvParams",
    "SvPriors",
    "SvState",
    "mixture_probabilities",
    "draw_indicators",
    "log_volatility_posterior",
    "draw_log_volatility",
    "draw_sv_block",
    "sv_forecast",
    "init_sv_state",
]

log = logging.getLogger(__name__)

# mixture approximation of log(chi^2_1)
MIX_WEIGHTS = np.array([0.00609, 0.04775, 0.13057, 0.20674, 0.22715,
                        0.18842, 0.12047, 0.05591, 0.01575, 0.00115])
MIX_MEANS = np.array([1.92677, 1.34744, 0.73504, 0.02266, -0.85173,
                      -1.97278, -3.46788, -5.55246, -8.68384, -14.65000])
MIX_VARS = np.array([0.11265, 0.17788, 0.26768, 0.40611, 0.62699,
                     0.98583, 1.57469, 2.54498, 4.16591, 7.33342])

# added to squared residuals before taking logs; guards exact zeros
LOG_OFFSET = 1e-8


@dataclass(frozen=True)
class SvParams:
    mu: float
    rho: float
    sigma2: float

    def __post_init__(self):
        if not (-1.0 < self.rho < 1.0):
            raise ParameterError(f"rho must lie in (-1, 1), got {self.rho}")
        if not (self.sigma2 >= 0.0):
            raise ParameterError(f"sigma2 must be non-negative, got {self.sigma2}")


@dataclass(frozen=True)
class SvPriors:
    """mu ~ N(mu_mean, mu_var); (rho+1)/2 ~ Beta(rho_a, rho_b); sigma2 ~ Gamma(shape, rate)."""

    mu_mean: float = 0.0
    mu_var: float = 100.0
    rho_a: float = 25.0
    rho_b: float = 5.0
    sigma2_shape: float = 0.5
    sigma2_rate: float = 0.5

    def rho_logpdf(self, rho):
        u = 0.5 * (rho + 1.0)
        return ((self.rho_a - 1.0) * np.log(u) + (self.rho_b - 1.0) * np.log1p(-u)
                - betaln(self.rho_a, self.rho_b) - np.log(2.0))

    def mu_logpdf(self, mu):
        return -0.5 * (np.log(2 * np.pi * self.mu_var) + (mu - self.mu_mean) ** 2 / self.mu_var)

    def sample(self, rng):
        mu = self.mu_mean + np.sqrt(self.mu_var) * rng.standard_normal()
        rho = 2.0 * rng.beta(self.rho_a, self.rho_b) - 1.0
        sigma2 = rng.standard_gamma(self.sigma2_shape) / self.sigma2_rate
        return SvParams(float(mu), float(rho), float(sigma2))


@dataclass
class SvState:
    h: np.ndarray                      # (T+1,), h_0 .. h_T
    params: SvParams
    indicators: np.ndarray = field(default=None)   # (T,), mixture components
    accepted: bool = True              # last (mu, rho) MH decision

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        if self.indicators is None:
            self.indicators = np.full(self.h.shape[0] - 1, 4, dtype=np.int64)


def init_sv_state(resid, rng=None, mu=None):
    """Neutral starting point: h at the log sample variance, rho=0.9, sigma2=0.1."""
    resid = np.asarray(resid, dtype=float)
    level = float(np.log(np.var(resid) + LOG_OFFSET)) if mu is None else float(mu)
    h = np.full(resid.shape[0] + 1, level)
    return SvState(h, SvParams(level, 0.9, 0.1))


def mixture_probabilities(ystar, h):
    """P(component k | ystar_t, h_t), shape (T, 10); rows sum to one."""
    resid = (np.asarray(ystar)[:, None] - np.asarray(h)[:, None]) - MIX_MEANS[None, :]
    logp = np.log(MIX_WEIGHTS) - 0.5 * np.log(MIX_VARS) - 0.5 * resid**2 / MIX_VARS
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    p /= p.sum(axis=1, keepdims=True)
    return p


def draw_indicators(ystar, h, rng):
    p = mixture_probabilities(ystar, h)
    cdf = np.cumsum(p, axis=1)
    u = rng.random(p.shape[0])[:, None]
    return np.minimum((u > cdf).sum(axis=1), len(MIX_WEIGHTS) - 1).astype(np.int64)


def _prior_bands(T, params):
    """Upper banded storage of the AR(1) prior precision of h_{0:T} - mu."""
    rho, s2 = params.rho, params.sigma2
    diag = np.full(T + 1, (1.0 + rho * rho) / s2)
    diag[0] = 1.0 / s2
    diag[-1] = 1.0 / s2
    if T == 0:
        diag[0] = (1.0 - rho * rho) / s2
    ab = np.zeros((2, T + 1))
    ab[1] = diag
    ab[0, 1:] = -rho / s2
    return ab


def log_volatility_posterior(ystar, comp_mean, comp_var, params):
    """Gaussian conditional of h_{0:T} given ystar_t = h_t + comp_mean_t + N(0, comp_var_t).

    Returns the posterior mean and the upper banded Cholesky factor ``U`` of
    the posterior precision (precision = U' U).
    """
    ystar = np.asarray(ystar, dtype=float)
    T = ystar.shape[0]
    ab = _prior_bands(T, params)
    # prior precision times the mean vector mu * 1
    rhs = params.mu * (ab[1].copy())
    rhs[1:] += params.mu * ab[0, 1:]
    rhs[:-1] += params.mu * ab[0, 1:]
    ab[1, 1:] += 1.0 / comp_var
    rhs[1:] += (ystar - comp_mean) / comp_var
    try:
        U = linalg.cholesky_banded(ab, lower=False)
    except linalg.LinAlgError as exc:
        raise NumericalError("log-volatility precision not positive definite", block="sv") from exc
    mean = linalg.cho_solve_banded((U, False), rhs)
    return mean, U


def draw_log_volatility(ystar, indicators, params, rng):
    mean, U = log_volatility_posterior(ystar, MIX_MEANS[indicators], MIX_VARS[indicators], params)
    z = rng.standard_normal(mean.shape[0])
    return mean + linalg.solve_banded((0, 1), U, z)


def _draw_sigma2_centered(h, mu, rho, priors, rng):
    T = h.shape[0] - 1
    e = h[1:] - mu - rho * (h[:-1] - mu)
    S = (1.0 - rho * rho) * (h[0] - mu) ** 2 + np.dot(e, e)
    return draw_gig(priors.sigma2_shape - 0.5 * (T + 1), 2.0 * priors.sigma2_rate, S, rng)


def _mu_rho_log_target_ratio(h0, mu, rho, sigma2, priors):
    # target / proposal in (mu, rho) coordinates, up to a constant
    var0 = sigma2 / (1.0 - rho * rho)
    return (-0.5 * (np.log(var0) + (h0 - mu) ** 2 / var0)
            + priors.mu_logpdf(mu) + priors.rho_logpdf(rho) - np.log(abs(1.0 - rho)))


def _draw_mu_rho_centered(h, params, sigma2, priors, rng):
    """Independence MH for (mu, rho) with the transition regression as proposal."""
    x = h[:-1]
    y = h[1:]
    T = y.shape[0]
    XtX = np.array([[T, x.sum()], [x.sum(), np.dot(x, x)]])
    det = XtX[0, 0] * XtX[1, 1] - XtX[0, 1] ** 2
    if T < 2 or not det > 1e-12 * max(1.0, XtX[1, 1]) ** 2:
        return params.mu, params.rho, False
    Xty = np.array([y.sum(), np.dot(x, y)])
    chol = np.linalg.cholesky(XtX)
    coef = linalg.cho_solve((chol, True), Xty)
    # N(coef, sigma2 (X'X)^{-1}) via the Cholesky factor of X'X
    z = rng.standard_normal(2)
    gamma_p, rho_p = coef + np.sqrt(sigma2) * linalg.solve_triangular(chol.T, z, lower=False)
    u = rng.random()
    if not (-1.0 < rho_p < 1.0):
        return params.mu, params.rho, False
    mu_p = gamma_p / (1.0 - rho_p)
    log_r = (_mu_rho_log_target_ratio(h[0], mu_p, rho_p, sigma2, priors)
             - _mu_rho_log_target_ratio(h[0], params.mu, params.rho, sigma2, priors))
    if np.log(u) < log_r:
        return float(mu_p), float(rho_p), True
    return params.mu, params.rho, False


def _draw_mu_sigma_noncentered(ystar, indicators, htilde, priors, rng):
    """Conjugate Gaussian draw of (mu, sigma) with sigma ~ N(0, 1/(2 rate))."""
    w = 1.0 / MIX_VARS[indicators]
    z = ystar - MIX_MEANS[indicators]
    ht = htilde[1:]
    prec = np.array([[w.sum(), np.dot(w, ht)], [np.dot(w, ht), np.dot(w * ht, ht)]])
    prec[0, 0] += 1.0 / priors.mu_var
    prec[1, 1] += 2.0 * priors.sigma2_rate
    rhs = np.array([np.dot(w, z) + priors.mu_mean / priors.mu_var, np.dot(w * ht, z)])
    chol = np.linalg.cholesky(prec)
    mean = linalg.cho_solve((chol, True), rhs)
    draw = mean + linalg.solve_triangular(chol.T, rng.standard_normal(2), lower=False)
    return float(draw[0]), float(draw[1])


def draw_sv_block(scaled_resid, state: SvState, priors: SvPriors, rng,
                  update_params=True, offset=LOG_OFFSET) -> SvState:
    """One MCMC update of (h, mu, rho, sigma2) given r_t ~ N(0, exp(h_t)).

    ``scaled_resid`` must already be divided by the square root of any
    heavy-tail scale, so that the conditional model above holds exactly.
    """
    r = np.asarray(scaled_resid, dtype=float)
    T = r.shape[0]
    if T == 0:
        raise ParameterError("stochastic volatility block needs at least one observation")
    if state.h.shape[0] != T + 1:
        raise ParameterError(f"h has length {state.h.shape[0]}, expected {T + 1}")
    ystar = np.log(r * r + offset)
    params = state.params

    ind = draw_indicators(ystar, state.h[1:], rng)
    h = draw_log_volatility(ystar, ind, params, rng)
    accepted = state.accepted
    if update_params:
        # centered step
        sigma2 = _draw_sigma2_centered(h, params.mu, params.rho, priors, rng)
        mu, rho, accepted = _draw_mu_rho_centered(h, params, sigma2, priors, rng)
        # non-centered step (conjugate only for the shape-1/2 Gamma prior)
        if priors.sigma2_shape == 0.5:
            sigma = np.sqrt(sigma2)
            htilde = (h - mu) / sigma
            mu, sigma = _draw_mu_sigma_noncentered(ystar, ind, htilde, priors, rng)
            h = mu + sigma * htilde
            sigma2 = sigma * sigma
        if not sigma2 > 0.0:
            raise NumericalError("non-positive sigma2 draw", block="sv")
        params = SvParams(mu, rho, float(sigma2))
    return SvState(h, params, ind, accepted)


def sv_forecast(h_T, params: SvParams, rng, size=None):
    """Draw h_{T+1} ~ N(mu + rho (h_T - mu), sigma2)."""
    mean = params.mu + params.rho * (np.asarray(h_T) - params.mu)
    out = mean + np.sqrt(params.sigma2) * rng.standard_normal(size=size if size is not None else np.shape(mean))
    return float(out) if np.ndim(out) == 0 else out


def simulate_sv_path(T, params: SvParams, rng):
    """h_{0:T} from the stationary AR(1) law."""
    h = np.empty(T + 1)
    h[0] = params.mu + np.sqrt(params.sigma2 / (1 - params.rho**2)) * rng.standard_normal()
    eps = np.sqrt(params.sigma2) * rng.standard_normal(T)
    for t in range(1, T + 1):
        h[t] = params.mu + params.rho * (h[t - 1] - params.mu) + eps[t - 1]
    return h
