"""
Dirichlet-Laplace prior on the static coefficient vector.

    alpha_j ~ N(0, psi_j phi_j^2 lambda^2),  psi_j ~ Exp(rate 1/2),
    phi ~ Dir(a, ..., a),                    lambda ~ Gamma(n a, rate 1/2)

with n = len(alpha).  The scale updates form one exact block draw from
p(phi, lambda, psi | alpha) when called in the order phi, lambda, psi
(see :func:`draw_dl_scales`).
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NumericalError, ParameterError
from .rngdist import draw_gig, draw_inverse_gaussian

__all__ = [
    "ALPHA_FLOOR",
    "PRIOR_VAR_FLOOR",
    "DlState",
    "WeightedRegression",
    "draw_alpha",
    "alpha_posterior",
    "draw_local_scales",
    "draw_global_scale",
    "draw_phi",
    "draw_dl_scales",
    "sample_dl_prior",
]

# |alpha_j| is floored here before entering GIG / inverse-Gaussian parameters
ALPHA_FLOOR = 1e-10
# prior variances below this are clipped so that 1/var stays finite
PRIOR_VAR_FLOOR = 1e-300


@dataclass
class DlState:
    alpha: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    lam: float
    a: float

    @classmethod
    def initial(cls, n, a=None):
        a = 1.0 / n if a is None else a
        return cls(np.zeros(n), np.ones(n), np.full(n, 1.0 / max(n, 1)), 1.0, a)

    def prior_var(self):
        return np.maximum(self.psi * self.phi**2 * self.lam**2, PRIOR_VAR_FLOOR)


@dataclass
class WeightedRegression:
    response: np.ndarray   # (T,)
    design: np.ndarray     # (T, n)
    noise_var: np.ndarray  # (T,)

    def __post_init__(self):
        self.response = np.asarray(self.response, dtype=float)
        self.design = np.atleast_2d(np.asarray(self.design, dtype=float))
        self.noise_var = np.asarray(self.noise_var, dtype=float)
        T = self.response.shape[0]
        if self.design.shape[0] != T or self.noise_var.shape != (T,):
            raise ParameterError("inconsistent regression dimensions")
        if not np.all(self.noise_var > 0):
            raise ParameterError("noise variances must be positive")


def alpha_posterior(reg: WeightedRegression, prior_var):
    """Posterior mean and lower Cholesky factor of the posterior precision."""
    prior_var = np.asarray(prior_var, dtype=float)
    if not np.all(prior_var > 0) or not np.all(np.isfinite(prior_var)):
        raise ParameterError("prior variances must be finite and positive")
    w = 1.0 / reg.noise_var
    Xw = reg.design * w[:, None]
    prec = reg.design.T @ Xw
    prec[np.diag_indices_from(prec)] += 1.0 / prior_var
    rhs = Xw.T @ reg.response
    # symmetric diagonal rescaling keeps the factorization well conditioned
    d = 1.0 / np.sqrt(np.diag(prec))
    scaled = prec * d[:, None] * d[None, :]
    try:
        chol = np.linalg.cholesky(scaled)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("posterior precision of alpha is singular", block="alpha") from exc
    mean = d * linalg.cho_solve((chol, True), d * rhs)
    return mean, chol, d


def draw_alpha(reg: WeightedRegression, prior_var, rng) -> np.ndarray:
    """Draw from the Gaussian posterior of a heteroscedastic linear model."""
    mean, chol, d = alpha_posterior(reg, prior_var)
    z = rng.standard_normal(mean.shape[0])
    draw = mean + d * linalg.solve_triangular(chol.T, z, lower=False)
    if not np.all(np.isfinite(draw)):
        raise NumericalError("non-finite alpha draw", block="alpha")
    return draw


def _abs_floor(alpha):
    return np.maximum(np.abs(np.asarray(alpha, dtype=float)), ALPHA_FLOOR)


def draw_local_scales(alpha, phi, lam, rng) -> np.ndarray:
    """psi_j = 1/r_j with r_j ~ InverseGaussian(phi_j lam / |alpha_j|, 1)."""
    r = draw_inverse_gaussian(np.asarray(phi) * lam / _abs_floor(alpha), 1.0, rng)
    return 1.0 / np.atleast_1d(r)


def global_scale_params(alpha, phi, a):
    n = np.size(alpha)
    return n * (a - 1.0), 1.0, 2.0 * np.sum(_abs_floor(alpha) / np.asarray(phi))


def draw_global_scale(alpha, phi, a, rng) -> float:
    """lambda ~ GIG(n(a-1), 1, 2 sum |alpha_j| / phi_j)."""
    p, aa, b = global_scale_params(alpha, phi, a)
    if not np.isfinite(b):
        raise NumericalError("global scale parameter not finite", block="lambda")
    return draw_gig(p, aa, b, rng)


def draw_phi(alpha, a, rng) -> np.ndarray:
    """phi_j = T_j / sum T_i with T_j ~ GIG(a - 1, 1, 2 |alpha_j|)."""
    T = np.atleast_1d(draw_gig(a - 1.0, 1.0, 2.0 * _abs_floor(alpha), rng))
    return T / T.sum()


def draw_dl_scales(state: DlState, rng) -> DlState:
    """Block update of (phi, lambda, psi) given alpha.

    phi | alpha marginalizes lambda and psi, lambda | phi, alpha marginalizes
    psi, so the draws must come in this order to target the joint posterior.
    """
    phi = draw_phi(state.alpha, state.a, rng)
    lam = draw_global_scale(state.alpha, phi, state.a, rng)
    psi = draw_local_scales(state.alpha, phi, lam, rng)
    return DlState(state.alpha, psi, phi, lam, state.a)


def sample_dl_prior(n, a, rng, size=None):
    """Ancestral draws of alpha from DL(a); returns shape ``(size, n)`` or ``(n,)``."""
    m = 1 if size is None else int(size)
    phi = rng.dirichlet(np.full(n, a), size=m) if a >= 0.05 else _dirichlet_small(n, a, m, rng)
    lam = rng.standard_gamma(n * a, size=m) / 0.5
    psi = rng.exponential(2.0, size=(m, n))
    alpha = np.sqrt(psi) * phi * lam[:, None] * rng.standard_normal((m, n))
    return alpha[0] if size is None else alpha


def _dirichlet_small(n, a, m, rng):
    # Gamma(a) for tiny a underflows; use G = U^(1/a) * Gamma(a+1) in log space
    logg = np.log(rng.standard_gamma(a + 1.0, size=(m, n))) + np.log(rng.random((m, n))) / a
    logg -= logg.max(axis=1, keepdims=True)
    g = np.exp(logg)
    return g / g.sum(axis=1, keepdims=True)
