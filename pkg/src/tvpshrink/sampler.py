"""
Gibbs sampler for the dynamic regression

    y_t = beta_0' X_t + sum_j sqrt(v_j) b_jt X_jt + sqrt(tau_t) exp(h_t / 2) e_t
    b_jt = b_j,t-1 + sqrt(xi_jt) eta_jt,  b_j0 = 0

with alpha = (beta_0, sqrt(v)) under a Dirichlet-Laplace prior, Student-t
observation errors (tau), Student-t state innovations (xi) and stochastic
volatility (h).  Individual features are switched on and off by
:class:`ModelFlags`; disabled blocks are skipped and consume no random
numbers, so nested models share their draw sequences.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field, asdict, replace
import hashlib
import json
import logging
import math

import numpy as np
from scipy.special import logsumexp

from .errors import NumericalError, ParameterError, TvpError
from .heavytails import (DofPrior, DofState, MixScales, draw_obs_scales, draw_state_scales,
                         update_dof)
from .rngdist import RngStream, draw_gig, draw_inverse_gamma, student_t_logpdf
from .shrinkage import DlState, WeightedRegression, draw_alpha, draw_dl_scales
from .state_space import SsmInputs, ffbs_draw
from .stochvol import (SvParams, SvPriors, SvState, draw_sv_block, init_sv_state,
                       simulate_sv_path, sv_forecast, LOG_OFFSET)

__all__ = [
    "ModelFlags",
    "ModelPriors",
    "SamplerConfig",
    "RegressionData",
    "ChainState",
    "DrawStore",
    "PredictiveDensity",
    "TruthParams",
    "initial_state",
    "gibbs_sweep",
    "interweave_alpha",
    "run_chain",
    "one_step_predictive",
    "log_predictive_score",
    "simulate_dgp",
    "effective_sample_size",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelFlags:
    tvp: bool = True
    t_obs: bool = False
    t_state: bool = False
    dl: bool = True


@dataclass(frozen=True)
class ModelPriors:
    dl_a: float | None = None          # None -> 1 / len(alpha)
    gaussian_var: float = 100.0        # prior variance of alpha when dl is off
    sv: SvPriors = field(default_factory=SvPriors)
    dof: DofPrior = field(default_factory=DofPrior)
    sv_offset: float = LOG_OFFSET


@dataclass(frozen=True)
class SamplerConfig:
    n_iter: int = 30000
    n_burn: int = 15000
    thin: int = 1
    flags: ModelFlags = field(default_factory=ModelFlags)
    priors: ModelPriors = field(default_factory=ModelPriors)
    seed: int = 0
    interweave: bool = True    # centered (beta_0, v) step after the alpha draw

    def __post_init__(self):
        if not (0 <= self.n_burn < self.n_iter):
            raise ParameterError(f"need 0 <= n_burn < n_iter, got {self.n_burn}, {self.n_iter}")
        if self.thin < 1:
            raise ParameterError("thin must be >= 1")

    @property
    def n_keep(self):
        return (self.n_iter - self.n_burn) // self.thin

    def to_dict(self):
        return asdict(self)

    def digest(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass
class RegressionData:
    y: np.ndarray   # (T,)
    X: np.ndarray   # (T, K), possibly K == 0

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        self.X = X[:, None] if X.ndim == 1 else X
        if self.X.shape[0] != self.y.shape[0]:
            raise ParameterError(f"X has {self.X.shape[0]} rows, y has {self.y.shape[0]}")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.X))):
            raise ParameterError("data contain non-finite values")

    @property
    def T(self):
        return self.y.shape[0]

    @property
    def K(self):
        return self.X.shape[1]


@dataclass
class ChainState:
    b: np.ndarray          # (T, K)
    dl: DlState            # alpha lives here: beta_0 then sqrt(v) when tvp
    sv: SvState
    scales: MixScales
    dof: DofState

    @property
    def alpha(self):
        return self.dl.alpha

    def beta0(self, K):
        return self.dl.alpha[:K]

    def sqrt_v(self, K):
        a = self.dl.alpha
        return a[K:2 * K] if a.shape[0] == 2 * K else np.zeros(K)

    def copy(self):
        return ChainState(
            self.b.copy(),
            DlState(self.dl.alpha.copy(), self.dl.psi.copy(), self.dl.phi.copy(), self.dl.lam, self.dl.a),
            SvState(self.sv.h.copy(), self.sv.params, self.sv.indicators.copy(), self.sv.accepted),
            MixScales(self.scales.tau.copy(), self.scales.xi.copy()),
            DofState(self.dof.nu, np.array(self.dof.kappa, dtype=float)),
        )


def _n_alpha(K, flags):
    return 2 * K if flags.tvp else K


def _dl_a(K, flags, priors):
    n = _n_alpha(K, flags)
    return priors.dl_a if priors.dl_a is not None else (1.0 / n if n else 1.0)


def initial_state(data: RegressionData, flags: ModelFlags = ModelFlags(),
                  priors: ModelPriors = ModelPriors()) -> ChainState:
    T, K = data.T, data.K
    n = _n_alpha(K, flags)
    dl = DlState.initial(n, _dl_a(K, flags, priors))
    return ChainState(
        b=np.zeros((T, K)),
        dl=dl,
        sv=init_sv_state(data.y),
        scales=MixScales(np.ones(T), np.ones((T, K))),
        dof=DofState(10.0, np.full(K, 10.0)),
    )


def fitted_values(data: RegressionData, state: ChainState):
    K = data.K
    if K == 0:
        return np.zeros(data.T)
    return data.X @ state.beta0(K) + np.sum(data.X * state.b * state.sqrt_v(K)[None, :], axis=1)


def interweave_alpha(s: ChainState, K, prior_var, rng):
    """Centered-parameterization update of (beta_0j, v_j) with beta_j fixed.

    With beta_jt = beta_0j + sqrt(v_j) b_jt held fixed, v_j | beta ~
    GIG(1/2 - T/2, 1/s_v, sum (d beta_t)^2 / xi_jt) under the normal prior
    on sqrt(v_j), then beta_0j | beta_j1, v_j is Gaussian.  The path b is
    re-expressed without forming beta explicitly, so tiny sqrt(v) loses no
    precision.  The sign of sqrt(v_j) is kept.
    """
    T = s.b.shape[0]
    alpha = s.dl.alpha.copy()
    b = s.b.copy()
    for j in range(K):
        sv_old = alpha[K + j]
        if sv_old == 0.0:
            continue
        xi = s.scales.xi[:, j]
        db = np.diff(np.concatenate([[0.0], b[:, j]]))
        S = sv_old * sv_old * float(np.sum(db * db / xi))
        if not S > 0:
            continue
        v_new = draw_gig(0.5 - 0.5 * T, 1.0 / prior_var[K + j], S, rng)
        sv_new = math.copysign(math.sqrt(v_new), sv_old)
        # beta_0 | beta_1 ~ N(prior 0, s0) x N(beta_1; beta_0, v xi_1)
        d1 = sv_old * b[0, j]          # beta_1 - beta_0(old)
        w1 = 1.0 / (v_new * xi[0])
        prec = 1.0 / prior_var[j] + w1
        beta0_old = alpha[j]
        shift = (w1 * d1 - beta0_old / prior_var[j]) / prec + rng.standard_normal() / math.sqrt(prec)
        alpha[j] = beta0_old + shift
        alpha[K + j] = sv_new
        b[:, j] = (sv_old * b[:, j] - shift) / sv_new
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(b))):
        raise NumericalError("non-finite interweaving update", block="interweave")
    s.dl.alpha = alpha
    s.b = b


@contextmanager
def _block(name):
    try:
        yield
    except NumericalError as exc:
        if exc.block is None:
            exc.block = name
        raise
    except (TvpError, np.linalg.LinAlgError, FloatingPointError) as exc:
        raise NumericalError(f"{name} block failed: {exc}", block=name) from exc


def gibbs_sweep(state: ChainState, data: RegressionData, config: SamplerConfig, rng) -> ChainState:
    """One full Gibbs cycle; returns a new state and leaves ``state`` untouched."""
    flags, priors = config.flags, config.priors
    s = state.copy()
    T, K = data.T, data.K
    y, X = data.y, data.X
    obs_var = s.scales.tau * np.exp(s.sv.h[1:])

    if K > 0:
        if flags.tvp:
            with _block("ffbs"):
                beta0, sv_ = s.beta0(K), s.sqrt_v(K)
                inputs = SsmInputs(y - X @ beta0, X * sv_[None, :], obs_var, s.scales.xi)
                s.b = ffbs_draw(inputs, rng).b
            design = np.hstack([X, s.b * X])
        else:
            design = X
        with _block("alpha"):
            prior_var = s.dl.prior_var() if flags.dl else np.full(design.shape[1], priors.gaussian_var)
            s.dl.alpha = draw_alpha(WeightedRegression(y, design, obs_var), prior_var, rng)
        if flags.tvp and config.interweave:
            with _block("interweave"):
                interweave_alpha(s, K, prior_var, rng)
        if flags.dl:
            with _block("dl"):
                s.dl = draw_dl_scales(s.dl, rng)

    resid = y - fitted_values(data, s)
    if flags.t_obs:
        with _block("tau"):
            s.scales.tau = draw_obs_scales(resid, s.sv.h[1:], s.dof.nu, rng)
    if flags.t_state and flags.tvp and K > 0:
        with _block("xi"):
            inc = np.diff(np.vstack([np.zeros((1, K)), s.b]), axis=0)
            s.scales.xi = np.asarray(draw_state_scales(inc, s.dof.kappa, rng)).reshape(T, K)
    if flags.t_obs:
        with _block("nu"):
            s.dof.nu, _ = update_dof(s.scales.tau, s.dof.nu, rng, priors.dof)
    if flags.t_state and flags.tvp and K > 0:
        with _block("kappa"):
            kappa = s.dof.kappa.copy()
            for j in range(K):
                kappa[j], _ = update_dof(s.scales.xi[:, j], kappa[j], rng, priors.dof)
            s.dof.kappa = kappa
    with _block("sv"):
        s.sv = draw_sv_block(resid / np.sqrt(s.scales.tau), s.sv, priors.sv, rng,
                             offset=priors.sv_offset)
    return s


# ---------------------------------------------------------------------------
# draw storage
# ---------------------------------------------------------------------------

DRAW_FIELDS = ("beta0", "sqrt_v", "b_last", "h_last", "mu", "rho", "sigma2", "nu", "kappa",
               "lam", "psi", "phi")


@dataclass
class DrawStore:
    """Retained posterior draws plus the metadata needed for prediction."""

    model_id: str
    config_hash: str
    seed: int
    flags: ModelFlags
    arrays: dict
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_draws(self):
        return int(self.arrays["mu"].shape[0])

    @property
    def K(self):
        return int(self.arrays["beta0"].shape[1])

    def __getitem__(self, key):
        return self.arrays[key]

    def metadata(self):
        return {
            "model_id": self.model_id,
            "config_hash": self.config_hash,
            "seed": int(self.seed),
            "flags": asdict(self.flags),
            "n_draws": self.n_draws,
            "K": self.K,
            "diagnostics": self.diagnostics,
        }


def _empty_arrays(M, K, n, T):
    return {
        "beta0": np.zeros((M, K)),
        "sqrt_v": np.zeros((M, K)),
        "b_last": np.zeros((M, K)),
        "h_last": np.zeros(M),
        "mu": np.zeros(M),
        "rho": np.zeros(M),
        "sigma2": np.zeros(M),
        "nu": np.full(M, np.inf),
        "kappa": np.full((M, K), np.inf),
        "lam": np.zeros(M),
        "psi": np.zeros((M, n)),
        "phi": np.zeros((M, n)),
        "h_mean": np.zeros(T + 1),
        "beta_mean": np.zeros((T, K)),
    }


def run_chain(data: RegressionData, config: SamplerConfig, model_id="custom",
              rng=None, init: ChainState | None = None) -> DrawStore:
    """Run ``config.n_iter`` sweeps and keep every ``thin``-th post-burn-in state."""
    rng = RngStream(config.seed).generator() if rng is None else rng
    flags = config.flags
    state = initial_state(data, flags, config.priors) if init is None else init.copy()
    T, K = data.T, data.K
    n = _n_alpha(K, flags)
    M = config.n_keep
    arr = _empty_arrays(M, K, n, T)
    m = 0
    for it in range(config.n_iter):
        try:
            state = gibbs_sweep(state, data, config, rng)
        except NumericalError as exc:
            raise NumericalError(f"iteration {it}: {exc}", index=it, block=exc.block) from exc
        if it >= config.n_burn and (it - config.n_burn + 1) % config.thin == 0:
            b0, sv_ = state.beta0(K), state.sqrt_v(K)
            arr["beta0"][m] = b0
            arr["sqrt_v"][m] = sv_
            arr["b_last"][m] = state.b[-1] if T and K else 0.0
            arr["h_last"][m] = state.sv.h[-1]
            p = state.sv.params
            arr["mu"][m], arr["rho"][m], arr["sigma2"][m] = p.mu, p.rho, p.sigma2
            if flags.t_obs:
                arr["nu"][m] = state.dof.nu
            if flags.t_state and flags.tvp:
                arr["kappa"][m] = state.dof.kappa
            arr["lam"][m] = state.dl.lam
            arr["psi"][m] = state.dl.psi
            arr["phi"][m] = state.dl.phi
            arr["h_mean"] += state.sv.h
            if K:
                arr["beta_mean"] += b0[None, :] + sv_[None, :] * state.b
            m += 1
    arr["h_mean"] /= max(M, 1)
    arr["beta_mean"] /= max(M, 1)
    diag = {}
    for key in ("mu", "rho", "sigma2", "nu", "lam"):
        x = arr[key]
        if np.all(np.isfinite(x)) and M > 3:
            diag[f"ess_{key}"] = effective_sample_size(x)
    for j in range(K):
        if M > 3:
            diag[f"ess_beta0_{j}"] = effective_sample_size(arr["beta0"][:, j])
            if flags.tvp:
                diag[f"ess_sqrt_v_{j}"] = effective_sample_size(arr["sqrt_v"][:, j])
    return DrawStore(model_id, config.digest(), config.seed, flags, arr, diag)


def effective_sample_size(x):
    """ESS by Geyer's initial monotone sequence estimator."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 4 or np.var(x) == 0:
        return float(n)
    xc = x - x.mean()
    f = np.fft.rfft(xc, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    rho = acov / acov[0]
    pairs = rho[:-1:2][: (n - 1) // 2] + rho[1::2][: (n - 1) // 2]
    total = 0.0
    prev = np.inf
    for g in pairs:
        if g <= 0:
            break
        g = min(g, prev)
        total += g
        prev = g
    tau = -1.0 + 2.0 * total
    return float(n / max(tau, 1.0 / n))


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------


@dataclass
class PredictiveDensity:
    location: np.ndarray   # (M,)
    logvar: np.ndarray     # (M,)
    dof: np.ndarray        # (M,), inf for Gaussian draws

    def __post_init__(self):
        self.location = np.asarray(self.location, dtype=float)
        self.logvar = np.asarray(self.logvar, dtype=float)
        self.dof = np.broadcast_to(np.asarray(self.dof, dtype=float), self.location.shape).copy()
        if not (self.location.shape == self.logvar.shape == self.dof.shape):
            raise ParameterError("predictive arrays must share one shape")

    @property
    def n_draws(self):
        return self.location.shape[0]

    def mean(self):
        return float(np.mean(self.location))

    def variance(self):
        """Mixture variance; t components with dof <= 2 make it infinite."""
        comp = np.exp(self.logvar) * np.where(np.isfinite(self.dof),
                                              self.dof / np.maximum(self.dof - 2.0, 0.0), 1.0)
        return float(np.mean(comp) + np.var(self.location))

    def sample(self, rng, size=None):
        M = self.n_draws
        idx = rng.integers(M, size=size)
        z = rng.standard_normal(size)
        d = self.dof[idx]
        g = np.ones(np.shape(d))
        fin = np.isfinite(d)
        g[fin] = rng.chisquare(d[fin]) / d[fin]
        return self.location[idx] + np.exp(0.5 * self.logvar[idx]) * z / np.sqrt(g)


def one_step_predictive(draws: DrawStore, x_next, rng) -> PredictiveDensity:
    """Per-draw conditional one-step-ahead densities.

    tau_{T+1} is integrated out analytically (Student-t kernel); h_{T+1} and
    xi_{T+1} are simulated because they enter scale and location.
    """
    x = np.asarray(x_next, dtype=float).ravel()
    K = draws.K
    if x.shape[0] != K:
        raise ParameterError(f"x_next has length {x.shape[0]}, model has K={K}")
    M = draws.n_draws
    flags = draws.flags
    A = draws.arrays
    h_next = A["mu"] + A["rho"] * (A["h_last"] - A["mu"]) + np.sqrt(A["sigma2"]) * rng.standard_normal(M)
    if K:
        if flags.tvp:
            if flags.t_state:
                xi = np.asarray(draw_inverse_gamma(0.5 * A["kappa"], 0.5 * A["kappa"], rng)).reshape(M, K)
            else:
                xi = np.ones((M, K))
            b_next = A["b_last"] + np.sqrt(xi) * rng.standard_normal((M, K))
        else:
            b_next = np.zeros((M, K))
        beta = A["beta0"] + A["sqrt_v"] * b_next
        loc = beta @ x
    else:
        loc = np.zeros(M)
    dof = A["nu"] if flags.t_obs else np.full(M, np.inf)
    return PredictiveDensity(loc, h_next, dof)


def log_predictive_score(pd: PredictiveDensity, realized: float) -> float:
    """log of the equally weighted mixture density at ``realized`` (log-sum-exp)."""
    if pd.n_draws == 0:
        raise ParameterError("empty predictive density")
    lp = student_t_logpdf(realized, pd.dof, pd.location, np.exp(0.5 * pd.logvar))
    return float(logsumexp(lp) - math.log(pd.n_draws))


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@dataclass
class TruthParams:
    beta0: np.ndarray
    sqrt_v: np.ndarray
    sv: SvParams = field(default_factory=lambda: SvParams(-1.0, 0.9, 0.04))
    nu: float | None = None       # None -> Gaussian observation errors
    kappa: np.ndarray | None = None  # None -> Gaussian state innovations


@dataclass
class SimulatedData:
    data: RegressionData
    b: np.ndarray
    beta: np.ndarray
    h: np.ndarray
    tau: np.ndarray
    xi: np.ndarray
    truth: TruthParams


def simulate_dgp(truth: TruthParams, T: int, K: int | None = None, seed: int = 0,
                 X=None) -> SimulatedData:
    """Draw (y, X) exactly from the model; X is standard normal unless given."""
    rng = RngStream(seed, 0).generator() if not isinstance(seed, np.random.Generator) else seed
    beta0 = np.atleast_1d(np.asarray(truth.beta0, dtype=float))
    K = beta0.shape[0] if K is None else K
    sqrt_v = np.broadcast_to(np.asarray(truth.sqrt_v, dtype=float), (K,))
    if X is None:
        X = rng.standard_normal((T, K))
    X = np.asarray(X, dtype=float).reshape(T, K)
    if truth.kappa is not None:
        kappa = np.broadcast_to(np.asarray(truth.kappa, dtype=float), (K,))
        xi = np.asarray(draw_inverse_gamma(0.5 * kappa, 0.5 * kappa, rng, size=(T, K))).reshape(T, K)
    else:
        xi = np.ones((T, K))
    b = np.cumsum(np.sqrt(xi) * rng.standard_normal((T, K)), axis=0)
    beta = beta0[None, :] + sqrt_v[None, :] * b
    h = simulate_sv_path(T, truth.sv, rng)
    if truth.nu is not None:
        tau = np.atleast_1d(draw_inverse_gamma(0.5 * truth.nu, 0.5 * truth.nu, rng, size=T))
    else:
        tau = np.ones(T)
    y = np.sum(beta * X, axis=1) + np.sqrt(tau * np.exp(h[1:])) * rng.standard_normal(T)
    return SimulatedData(RegressionData(y, X), b, beta, h, tau, xi, truth)
