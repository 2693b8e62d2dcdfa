"""
Joint-distribution ("getting it right") checks for the Gibbs sampler.

Successive-conditional simulation alternates y ~ p(y | theta) with one Gibbs
sweep theta ~ K(theta, . | y).  If every chain starts from a prior draw, each
visited theta is marginally a prior draw whenever the sweep leaves the
posterior invariant.  Running many short independent chains therefore gives
i.i.d. chain means, and z-scores of the first two moments against the exact
prior moments need no autocorrelation modelling.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate, stats
from scipy.special import gammaln

from .heavytails import DofState, MixScales
from .rngdist import RngStream
from .sampler import (ChainState, ModelFlags, ModelPriors, RegressionData, SamplerConfig, TruthParams,
                      _dl_a, _n_alpha, fitted_values, gibbs_sweep, run_chain, simulate_dgp)
from .shrinkage import DlState, _dirichlet_small
from .stochvol import SvParams, SvState, simulate_sv_path

__all__ = ["sample_prior_state", "simulate_observations", "geweke_test", "prior_moments",
           "GewekeResult", "MODEL_FLAGS", "RecoveryResult", "recovery_study", "RECOVERY_TRUTH"]

MODEL_FLAGS = {
    "TVP-SV DL": ModelFlags(tvp=True, t_obs=False, t_state=False, dl=True),
    "t-TVP-SV DL 1": ModelFlags(tvp=True, t_obs=True, t_state=False, dl=True),
    "t-TVP-SV DL 2": ModelFlags(tvp=True, t_obs=False, t_state=True, dl=True),
    "t-TVP-SV DL 3": ModelFlags(tvp=True, t_obs=True, t_state=True, dl=True),
}


def sample_prior_state(T, K, flags: ModelFlags, priors: ModelPriors, rng) -> ChainState:
    """Ancestral draw of every parameter and latent variable from the prior."""
    n = _n_alpha(K, flags)
    a = _dl_a(K, flags, priors)
    if flags.dl and n:
        phi = (rng.dirichlet(np.full(n, a)) if a >= 0.05 else _dirichlet_small(n, a, 1, rng)[0])
        lam = rng.standard_gamma(n * a) / 0.5
        psi = rng.exponential(2.0, size=n)
        alpha = np.sqrt(psi) * phi * lam * rng.standard_normal(n)
    else:
        phi, lam, psi = np.full(n, 1.0 / max(n, 1)), 1.0, np.ones(n)
        alpha = math.sqrt(priors.gaussian_var) * rng.standard_normal(n)
    dl = DlState(alpha, psi, phi, float(lam), a)

    nu = priors.dof.sample(rng) if flags.t_obs else 10.0
    heavy_state = flags.t_state and flags.tvp
    kappa = np.atleast_1d(priors.dof.sample(rng, size=K)) if heavy_state else np.full(K, 10.0)
    tau = 1.0 / (rng.standard_gamma(0.5 * nu, size=T) / (0.5 * nu)) if flags.t_obs else np.ones(T)
    if heavy_state:
        xi = 1.0 / (rng.standard_gamma(0.5 * kappa, size=(T, K)) / (0.5 * kappa))
    else:
        xi = np.ones((T, K))
    b = np.cumsum(np.sqrt(xi) * rng.standard_normal((T, K)), axis=0) if flags.tvp else np.zeros((T, K))
    params = priors.sv.sample(rng)
    h = simulate_sv_path(T, params, rng)
    return ChainState(b, dl, SvState(h, params), MixScales(tau, xi), DofState(nu, kappa))


def simulate_observations(state: ChainState, X, rng):
    data = RegressionData(np.zeros(X.shape[0]), X)
    mean = fitted_values(data, state)
    sd = np.sqrt(state.scales.tau * np.exp(state.sv.h[1:]))
    return mean + sd * rng.standard_normal(X.shape[0])


def _trunc_gamma_moments(prior):
    dist = stats.gamma(prior.shape, scale=1.0 / prior.rate)
    Z = dist.cdf(prior.upper) - dist.cdf(prior.lower)
    m1 = integrate.quad(lambda x: x * dist.pdf(x), prior.lower, prior.upper)[0] / Z
    m2 = integrate.quad(lambda x: x * x * dist.pdf(x), prior.lower, prior.upper)[0] / Z
    return m1, m2


def prior_moments(K, flags: ModelFlags, priors: ModelPriors, h_times=(), robust=False):
    """Exact prior first and second moments of the monitored quantities."""
    n = _n_alpha(K, flags)
    a = _dl_a(K, flags, priors)
    # E[alpha^2] = E[psi] E[phi^2] E[lambda^2] = 8 a (a + 1) for any dimension
    a2 = 8.0 * a * (a + 1.0) if flags.dl else priors.gaussian_var
    # |alpha|^(1/2) has light tails; alpha = Laplace(1) * Gamma(a, scale 2) under DL
    if flags.dl:
        root = (math.gamma(1.5) * math.sqrt(2.0) * math.exp(gammaln(a + 0.5) - gammaln(a)), 2.0 * a)
    else:
        g = priors.gaussian_var
        root = (g**0.25 * 2**0.25 * math.gamma(0.75) / math.sqrt(math.pi), math.sqrt(2.0 * g / math.pi))
    out = {}
    for j in range(K):
        out[f"beta0_{j}"] = (0.0, a2)
        if flags.tvp:
            out[f"sqrt_v_{j}"] = (0.0, a2)
    if robust:
        for j in range(K):
            out[f"root_beta0_{j}"] = root
            if flags.tvp:
                out[f"root_sqrt_v_{j}"] = root
    dof = _trunc_gamma_moments(priors.dof)
    if flags.t_obs:
        out["nu"] = dof
    if flags.t_state and flags.tvp:
        for j in range(K):
            out[f"kappa_{j}"] = dof
    sv = priors.sv
    out["mu"] = (sv.mu_mean, sv.mu_var + sv.mu_mean**2)
    A, B = sv.rho_a, sv.rho_b
    eb = A / (A + B)
    eb2 = A * (A + 1) / ((A + B) * (A + B + 1))
    out["rho"] = (2 * eb - 1, 4 * eb2 - 4 * eb + 1)
    c, r = sv.sigma2_shape, sv.sigma2_rate
    es2 = c / r
    out["sigma2"] = (es2, c * (c + 1) / r**2)
    if h_times:
        beta = stats.beta(A, B)
        inv = integrate.quad(lambda u: beta.pdf(u) / (1 - (2 * u - 1) ** 2), 0, 1)[0]
        for t in h_times:
            out[f"h_{t}"] = (sv.mu_mean, sv.mu_var + sv.mu_mean**2 + es2 * inv)
    return out


def _monitor(state: ChainState, K, flags, h_times):
    vals = {}
    for j in range(K):
        vals[f"beta0_{j}"] = state.dl.alpha[j]
        if flags.tvp:
            vals[f"sqrt_v_{j}"] = state.dl.alpha[K + j]
    for j in range(K):
        vals[f"root_beta0_{j}"] = math.sqrt(abs(state.dl.alpha[j]))
        if flags.tvp:
            vals[f"root_sqrt_v_{j}"] = math.sqrt(abs(state.dl.alpha[K + j]))
    if flags.t_obs:
        vals["nu"] = state.dof.nu
    if flags.t_state and flags.tvp:
        for j in range(K):
            vals[f"kappa_{j}"] = state.dof.kappa[j]
    p = state.sv.params
    vals["mu"], vals["rho"], vals["sigma2"] = p.mu, p.rho, p.sigma2
    for t in h_times:
        vals[f"h_{t}"] = state.sv.h[t]
    return vals


@dataclass
class GewekeResult:
    model: str
    z: dict           # name -> (z first moment, z second moment)
    prior: dict       # name -> exact (m1, m2)
    estimate: dict    # name -> simulated (m1, m2)
    n_cycles: int
    threshold: float = 3.0

    def passed(self, name=None):
        names = [name] if name is not None else list(self.z)
        return all(abs(self.z[k][0]) < self.threshold and abs(self.z[k][1]) < self.threshold
                   for k in names)

    def lines(self):
        out = []
        for k, (z1, z2) in self.z.items():
            ok = abs(z1) < self.threshold and abs(z2) < self.threshold
            out.append(f"{self.model:>14s} {k:>10s}  z1={z1:+6.2f}  z2={z2:+6.2f}  {'PASS' if ok else 'FAIL'}")
        return out


def geweke_test(flags: ModelFlags, T=25, K=2, n_chains=100, n_cycles=100, seed=0,
                priors: ModelPriors = ModelPriors(), h_times=(), model="custom", X=None,
                robust=False):
    """Multi-chain successive-conditional test; returns a :class:`GewekeResult`."""
    rng = RngStream(seed, 7).generator()
    X = rng.standard_normal((T, K)) if X is None else np.asarray(X, dtype=float)
    config = SamplerConfig(n_iter=2, n_burn=1, flags=flags, priors=priors, seed=seed)
    exact = prior_moments(K, flags, priors, h_times, robust)
    names = list(exact)
    sums = np.zeros((n_chains, len(names), 2))
    for c in range(n_chains):
        crng = RngStream(seed, 1000 + c).generator()
        state = sample_prior_state(T, K, flags, priors, crng)
        for _ in range(n_cycles):
            y = simulate_observations(state, X, crng)
            state = gibbs_sweep(state, RegressionData(y, X), config, crng)
            vals = _monitor(state, K, flags, h_times)
            v = np.array([vals[k] for k in names])
            sums[c, :, 0] += v
            sums[c, :, 1] += v * v
    means = sums / n_cycles
    est = means.mean(axis=0)
    se = means.std(axis=0, ddof=1) / math.sqrt(n_chains)
    z, estimate = {}, {}
    for i, k in enumerate(names):
        m1, m2 = exact[k]
        z[k] = ((est[i, 0] - m1) / se[i, 0], (est[i, 1] - m2) / se[i, 1])
        estimate[k] = (est[i, 0], est[i, 1])
    return GewekeResult(model, z, exact, estimate, n_chains * n_cycles)


# ---------------------------------------------------------------------------
# parameter recovery on simulated data
# ---------------------------------------------------------------------------

# Planted values: small but non-negligible drift variances, heavy tails in
# both equations, a persistent volatility process.
RECOVERY_TRUTH = TruthParams(np.array([0.5, -0.3, 0.2]), np.sqrt([1e-3, 5e-4, 2e-4]),
                             SvParams(-1.0, 0.9, 0.04), nu=5.0, kappa=np.array([4.0, 4.0, 4.0]))


@dataclass
class RecoveryResult:
    covered_beta0: np.ndarray     # (n_reps, K) bool
    covered_v: np.ndarray         # (n_reps, K) bool
    level: float

    @property
    def coverage_beta0(self):
        return float(self.covered_beta0.mean())

    @property
    def coverage_v(self):
        return float(self.covered_v.mean())


def recovery_study(truth: TruthParams = RECOVERY_TRUTH, n_reps=50, T=400, n_iter=3000, n_burn=1000,
                   level=0.9, seed=0, flags=ModelFlags(True, True, True, True), progress=None):
    """Equal-tailed credible-interval coverage of beta0 and v over replications.

    Replication ``r`` simulates with seed ``seed + r`` and fits a chain seeded
    by ``(seed, r)``.
    """
    K = len(truth.beta0)
    v_true = np.asarray(truth.sqrt_v, dtype=float) ** 2
    q = [(1 - level) / 2, (1 + level) / 2]
    cb, cv = [], []
    for r in range(n_reps):
        sim = simulate_dgp(truth, T, K, seed=seed + r)
        cfg = SamplerConfig(n_iter=n_iter, n_burn=n_burn, flags=flags)
        d = run_chain(sim.data, cfg, rng=RngStream(seed, 10_000 + r).generator())
        lo, hi = np.quantile(d["beta0"], q, axis=0)
        cb.append((lo <= truth.beta0) & (truth.beta0 <= hi))
        lo, hi = np.quantile(d["sqrt_v"] ** 2, q, axis=0)
        cv.append((lo <= v_true) & (v_true <= hi))
        if progress is not None:
            progress(r, cb[-1], cv[-1])
    return RecoveryResult(np.array(cb), np.array(cv), level)
