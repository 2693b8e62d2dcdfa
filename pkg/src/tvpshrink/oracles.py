"""
Independent reference computations for the samplers.

These avoid the code paths they check: GIG moments come from Bessel-function
ratios, and state-space posteriors from dense multivariate-normal algebra
on the stacked coefficient path.
"""

import math

import numpy as np
from scipy import stats
from scipy.special import kve

from .rngdist import RngStream, draw_gig
from .state_space import SsmInputs, ffbs_draw, marginal_loglik

__all__ = ["gig_moment", "gig_mean_var", "dense_state_posterior", "oracle_suite"]


def gig_moment(p, a, b, k):
    """E[X^k] for GIG(p, a, b) with a, b > 0."""
    w = math.sqrt(a * b)
    return (b / a) ** (k / 2.0) * kve(p + k, w) / kve(p, w)


def gig_mean_var(p, a, b):
    m1 = gig_moment(p, a, b, 1)
    return m1, gig_moment(p, a, b, 2) - m1 * m1


def dense_state_posterior(inputs: SsmInputs):
    """Posterior mean and covariance of vec(b_{1:T}) (time-major) and log p(obs).

    Prior: b = C eta with C the block lower-triangular cumulative-sum
    operator, so Cov(b) = C diag(state_var) C'.
    """
    T, K = inputs.T, inputs.K
    n = T * K
    C = np.kron(np.tril(np.ones((T, T))), np.eye(K))
    S0 = C @ np.diag(inputs.state_var.ravel()) @ C.T
    H = np.zeros((T, n))
    for t in range(T):
        H[t, t * K:(t + 1) * K] = inputs.loadings[t]
    R = np.diag(inputs.obs_var)
    Sy = H @ S0 @ H.T + R
    G = np.linalg.solve(Sy, H @ S0).T
    mean = G @ inputs.obs
    cov = S0 - G @ H @ S0
    loglik = stats.multivariate_normal(np.zeros(T), Sy).logpdf(inputs.obs)
    return mean, 0.5 * (cov + cov.T), float(loglik)


def _random_inputs(rng, T, K):
    return SsmInputs(rng.standard_normal(T), rng.standard_normal((T, K)),
                     rng.uniform(0.3, 2.0, T), rng.uniform(0.1, 1.5, (T, K)))


def oracle_suite(seed=0, quick=False):
    """Yield ``(name, passed, detail)`` for fast GIG and FFBS oracle checks."""
    rng = RngStream(seed, 99).generator()
    n = 20_000 if quick else 100_000
    out = []
    worst = 0.0
    for p, a, b in [(-0.5, 1.0, 1.0), (0.3, 0.5, 0.2), (-3.0, 1.0, 0.05), (2.5, 4.0, 1.0),
                    (0.0, 1e-3, 1e-3), (-0.5, 0.02, 1.0)]:
        x = draw_gig(p, a, b, rng, size=n)
        m, v = gig_mean_var(p, a, b)
        worst = max(worst, abs(x.mean() - m) / math.sqrt(v / n))
    out.append(("gig_moments", bool(worst < 4.0), f"max |z|={worst:.2f}"))

    n_draw = 4_000 if quick else 20_000
    worst_z, worst_cov, worst_ll = 0.0, 0.0, 0.0
    for i in range(5 if quick else 20):
        T, K = int(rng.integers(1, 6)), int(rng.integers(1, 3))
        inputs = _random_inputs(rng, T, K)
        mean, cov, ll = dense_state_posterior(inputs)
        B = np.array([ffbs_draw(inputs, rng).b.ravel() for _ in range(n_draw)])
        se = np.sqrt(np.diag(cov) / n_draw)
        worst_z = max(worst_z, float(np.max(np.abs(B.mean(0) - mean) / se)))
        worst_cov = max(worst_cov, float(np.linalg.norm(np.cov(B.T).reshape(cov.shape) - cov)
                                         / np.linalg.norm(cov)))
        worst_ll = max(worst_ll, abs(marginal_loglik(inputs) - ll))
    out.append(("ffbs_mean", worst_z < 4.0, f"max |z|={worst_z:.2f}"))
    out.append(("ffbs_cov", worst_cov < 0.05, f"max rel err={worst_cov:.3f}"))
    out.append(("marginal_loglik", worst_ll < 1e-8, f"max abs err={worst_ll:.1e}"))
    return out
