"""
Student-t errors as Gaussian scale mixtures.

Observation scales tau_t ~ InvGamma(nu/2, nu/2) and state scales
xi_jt ~ InvGamma(kappa_j/2, kappa_j/2).  Degrees of freedom carry a
Gamma(1, rate 1/10) prior truncated to [2, 50] and are updated by an
independence Metropolis-Hastings step whose Gaussian proposal sits at the
conditional mode with the observed information as precision.
"""

from dataclasses import dataclass
import logging
import math

import numpy as np
from scipy import stats
from scipy.special import digamma, gammaln, ndtr, ndtri, polygamma

from .errors import ParameterError
from .rngdist import draw_inverse_gamma

__all__ = [
    "DOF_BOUNDS",
    "DofPrior",
    "DofState",
    "MixScales",
    "draw_obs_scales",
    "draw_state_scales",
    "dof_logdensity",
    "dof_mode",
    "update_dof",
]

log = logging.getLogger(__name__)

DOF_BOUNDS = (2.0, 50.0)


@dataclass(frozen=True)
class DofPrior:
    shape: float = 1.0
    rate: float = 0.1
    lower: float = DOF_BOUNDS[0]
    upper: float = DOF_BOUNDS[1]

    def sample(self, rng, size=None):
        """Inverse-CDF draws from the truncated Gamma prior."""
        dist = stats.gamma(self.shape, scale=1.0 / self.rate)
        lo, hi = dist.cdf(self.lower), dist.cdf(self.upper)
        u = rng.uniform(lo, hi, size=size)
        out = dist.ppf(u)
        return float(out) if np.ndim(out) == 0 else out


@dataclass
class DofState:
    nu: float
    kappa: np.ndarray


@dataclass
class MixScales:
    tau: np.ndarray   # (T,)
    xi: np.ndarray    # (T, K)


def draw_obs_scales(resid, h, nu, rng):
    """tau_t ~ InvGamma((nu+1)/2, (nu + resid_t^2 exp(-h_t))/2), independently over t."""
    resid = np.asarray(resid, dtype=float)
    h = np.asarray(h, dtype=float)
    return np.atleast_1d(draw_inverse_gamma(0.5 * (nu + 1.0), 0.5 * (nu + resid**2 * np.exp(-h)), rng))


def draw_state_scales(increments, kappa, rng):
    """xi_t ~ InvGamma((kappa+1)/2, (kappa + increment_t^2)/2).

    ``increments`` may be (T,) with scalar ``kappa`` or (T, K) with ``kappa``
    of length K.
    """
    inc = np.asarray(increments, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    return draw_inverse_gamma(0.5 * (kappa + 1.0), 0.5 * (kappa + inc**2), rng)


def _scale_stat(scales):
    s = np.asarray(scales, dtype=float)
    return s.size, float(np.sum(np.log(s) + 1.0 / s))


def dof_loglik(scales, nu):
    """Conditional log-likelihood of nu given scale draws (no prior term)."""
    n, S = _scale_stat(scales)
    return 0.5 * n * nu * math.log(0.5 * nu) - n * gammaln(0.5 * nu) - 0.5 * nu * S


def dof_logdensity(scales, nu, prior: DofPrior = DofPrior()):
    """log p(scales | nu) + log Gamma-prior(nu), up to a constant."""
    if not nu > 0:
        raise ParameterError("degrees of freedom must be positive")
    return dof_loglik(scales, nu) + (prior.shape - 1.0) * math.log(nu) - prior.rate * nu


def _dof_derivs(nu, n, S, prior):
    g = (0.5 * n * (math.log(0.5 * nu) + 1.0 - digamma(0.5 * nu)) - 0.5 * S
         + (prior.shape - 1.0) / nu - prior.rate)
    H = (0.5 * n / nu - 0.25 * n * polygamma(1, 0.5 * nu)
         - (prior.shape - 1.0) / nu**2)
    return g, H


def dof_mode(scales, prior: DofPrior = DofPrior(), tol=1e-8, max_iter=200):
    """Maximizer of :func:`dof_logdensity` on the prior bounds.

    Safeguarded Newton with bisection fallback.  Returns ``(mode, info,
    converged)`` where ``info`` is minus the second derivative at the mode.
    """
    n, S = _scale_stat(scales)
    lo, hi = prior.lower, prior.upper
    g_lo, H_lo = _dof_derivs(lo, n, S, prior)
    if g_lo <= 0.0:
        return lo, -H_lo, True
    g_hi, H_hi = _dof_derivs(hi, n, S, prior)
    if g_hi >= 0.0:
        return hi, -H_hi, True
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        g, H = _dof_derivs(x, n, S, prior)
        if abs(g) < tol:
            return x, -H, True
        if g > 0:
            lo = x
        else:
            hi = x
        step = x - g / H if H < 0 else None
        x = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-14 * max(1.0, x):
            g, H = _dof_derivs(x, n, S, prior)
            return x, -H, abs(g) < max(tol, 1e-6 * n)
    g, H = _dof_derivs(x, n, S, prior)
    return x, -H, abs(g) < tol


def _truncated_normal(mean, sd, lo, hi, rng):
    # inverse CDF on the side of the mean that keeps both tail masses resolvable
    za, zb = (lo - mean) / sd, (hi - mean) / sd
    if za >= 0.0:
        pa, pb = ndtr(-zb), ndtr(-za)
        z = -ndtri(pa + (pb - pa) * rng.random())
    else:
        pa, pb = ndtr(za), ndtr(zb)
        z = ndtri(pa + (pb - pa) * rng.random())
    return min(max(mean + sd * float(z), lo), hi)


def update_dof(scales, current, rng, prior: DofPrior = DofPrior()):
    """Independence MH step for a degrees-of-freedom parameter.

    Proposal: N(mode, 1/info) truncated to the prior bounds.  The truncation
    constant is shared by current and proposed states and cancels.
    Returns ``(new_value, accepted)``.
    """
    if not (prior.lower <= current <= prior.upper):
        raise ParameterError(f"current dof {current} outside [{prior.lower}, {prior.upper}]")
    mode, info, ok = dof_mode(scales, prior)
    if not ok or not info > 0 or not math.isfinite(info):
        log.warning("dof mode search did not converge; keeping current value %.4g", current)
        return current, False
    sd = 1.0 / math.sqrt(info)
    prop = _truncated_normal(mode, sd, prior.lower, prior.upper, rng)

    def log_q(x):
        return -0.5 * ((x - mode) / sd) ** 2

    log_r = (dof_logdensity(scales, prop, prior) - dof_logdensity(scales, current, prior)
             + log_q(current) - log_q(prop))
    if math.log(rng.random()) < log_r:
        return prop, True
    return current, False


def dof_acceptance_probability(scales, current, proposal, prior: DofPrior = DofPrior()):
    mode, info, _ = dof_mode(scales, prior)
    sd = 1.0 / math.sqrt(info)
    log_r = (dof_logdensity(scales, proposal, prior) - dof_logdensity(scales, current, prior)
             - 0.5 * ((current - mode) / sd) ** 2 + 0.5 * ((proposal - mode) / sd) ** 2)
    return min(1.0, math.exp(min(log_r, 0.0)))
