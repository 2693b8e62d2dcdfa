import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.special import logsumexp

import tvpshrink.sampler as sampler_mod
from tvpshrink.errors import NumericalError, ParameterError
from tvpshrink.rngdist import RngStream
from tvpshrink.sampler import (DrawStore, ModelFlags, ModelPriors, PredictiveDensity, RegressionData,
                               SamplerConfig, TruthParams, effective_sample_size, gibbs_sweep,
                               initial_state, log_predictive_score, one_step_predictive, run_chain,
                               simulate_dgp)
from tvpshrink.shrinkage import WeightedRegression, draw_alpha
from tvpshrink.stochvol import SvParams, draw_sv_block

FULL = ModelFlags(True, True, True, True)
STATIC = ModelFlags(False, False, False, False)


def small_data(T=40, K=2, seed=0):
    truth = TruthParams(np.linspace(0.5, -0.5, K), np.full(K, 0.05), SvParams(-1.0, 0.9, 0.05))
    return simulate_dgp(truth, T, K, seed=seed).data


def make_store(M, K, flags=ModelFlags(), **arrays):
    base = {"beta0": np.zeros((M, K)), "sqrt_v": np.zeros((M, K)), "b_last": np.zeros((M, K)),
            "h_last": np.zeros(M), "mu": np.zeros(M), "rho": np.zeros(M), "sigma2": np.zeros(M),
            "nu": np.full(M, np.inf), "kappa": np.full((M, K), np.inf)}
    base.update(arrays)
    return DrawStore("test", "0", 0, flags, base)


# ---------------------------------------------------------------------------
# sweep and chain mechanics
# ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ParameterError):
        SamplerConfig(n_iter=10, n_burn=10)
    with pytest.raises(ParameterError):
        SamplerConfig(n_iter=10, n_burn=2, thin=0)
    assert SamplerConfig().n_iter == 30000 and SamplerConfig().n_burn == 15000


def test_retained_count_example():
    d = run_chain(small_data(), SamplerConfig(n_iter=10, n_burn=5, flags=FULL))
    assert d.n_draws == 5


@settings(max_examples=30, deadline=None)
@given(n_iter=st.integers(2, 40), burn_frac=st.floats(0, 0.95), thin=st.integers(1, 7))
def test_retained_count_property(n_iter, burn_frac, thin):
    n_burn = min(int(burn_frac * n_iter), n_iter - 1)
    cfg = SamplerConfig(n_iter=n_iter, n_burn=n_burn, thin=thin, flags=STATIC)
    assert run_chain(small_data(T=10, K=1), cfg).n_draws == (n_iter - n_burn) // thin


def test_static_model_has_zero_sqrt_v():
    d = run_chain(small_data(), SamplerConfig(n_iter=30, n_burn=10, flags=ModelFlags(False, True, True, True)))
    assert np.all(d["sqrt_v"] == 0.0)
    assert np.all(np.isinf(d["kappa"]))


def test_sweep_deterministic_and_pure():
    data = small_data()
    cfg = SamplerConfig(flags=FULL)
    s0 = initial_state(data, FULL)
    before = s0.copy()
    a = gibbs_sweep(s0, data, cfg, RngStream(3).generator())
    b = gibbs_sweep(s0, data, cfg, RngStream(3).generator())
    assert np.array_equal(a.b, b.b) and np.array_equal(a.alpha, b.alpha)
    assert np.array_equal(a.sv.h, b.sv.h) and a.dof.nu == b.dof.nu
    assert np.array_equal(s0.alpha, before.alpha) and np.array_equal(s0.b, before.b)


def test_chain_reproducible():
    data = small_data()
    cfg = SamplerConfig(n_iter=20, n_burn=5, flags=FULL, seed=9)
    a, b = run_chain(data, cfg), run_chain(data, cfg)
    for k in a.arrays:
        assert np.array_equal(a[k], b[k])


def test_mean_sv_sweep_is_gaussian_regression_plus_sv():
    """Static Gaussian-prior intercept model: the sweep is the alpha draw then the SV block."""
    T = 30
    data = RegressionData(RngStream(4).generator().standard_normal(T) * 0.1 + 0.02, np.ones((T, 1)))
    cfg = SamplerConfig(flags=STATIC)
    s0 = initial_state(data, STATIC)
    out = gibbs_sweep(s0, data, cfg, RngStream(5).generator())
    g = RngStream(5).generator()
    obs_var = np.exp(s0.sv.h[1:])
    alpha = draw_alpha(WeightedRegression(data.y, data.X, obs_var), np.full(1, 100.0), g)
    sv = draw_sv_block(data.y - alpha[0], s0.sv, ModelPriors().sv, g)
    assert np.array_equal(out.alpha, alpha)
    assert np.array_equal(out.sv.h, sv.h) and out.sv.params == sv.params
    assert np.all(out.scales.tau == 1.0)


def test_t_flags_off_pins_scales():
    data = small_data()
    flags = replace(FULL, t_obs=False, t_state=False)
    d = run_chain(data, SamplerConfig(n_iter=15, n_burn=5, flags=flags))
    assert np.all(np.isinf(d["nu"])) and np.all(np.isinf(d["kappa"]))
    s = initial_state(data, flags)
    for _ in range(5):
        s = gibbs_sweep(s, data, SamplerConfig(flags=flags), RngStream(6).generator())
    assert np.all(s.scales.tau == 1.0) and np.all(s.scales.xi == 1.0)


def test_no_predictors():
    T = 25
    data = RegressionData(RngStream(7).generator().standard_normal(T), np.zeros((T, 0)))
    d = run_chain(data, SamplerConfig(n_iter=20, n_burn=10, flags=FULL))
    assert d["beta0"].shape == (10, 0)
    pd = one_step_predictive(d, np.zeros(0), RngStream(8).generator())
    assert np.all(pd.location == 0.0)


def test_block_errors_carry_identity(monkeypatch):
    def broken(*args, **kwargs):
        raise NumericalError("boom")
    monkeypatch.setattr(sampler_mod, "ffbs_draw", broken)
    with pytest.raises(NumericalError) as info:
        run_chain(small_data(), SamplerConfig(n_iter=5, n_burn=1, flags=FULL))
    assert info.value.block == "ffbs"
    assert "iteration 0" in str(info.value)


def test_interweaving_preserves_coefficient_paths():
    data = small_data(T=50, K=2, seed=3)
    s = initial_state(data, FULL)
    g = RngStream(10).generator()
    cfg = SamplerConfig(flags=FULL)
    for _ in range(20):
        s = gibbs_sweep(s, data, cfg, g)
    K = 2
    beta = s.beta0(K)[None, :] + s.sqrt_v(K)[None, :] * s.b
    t = s.copy()
    sampler_mod.interweave_alpha(t, K, t.dl.prior_var(), g)
    beta_new = t.beta0(K)[None, :] + t.sqrt_v(K)[None, :] * t.b
    assert np.allclose(beta, beta_new, atol=1e-10)
    assert np.all(np.sign(t.sqrt_v(K)) == np.sign(s.sqrt_v(K)))


def test_effective_sample_size():
    g = RngStream(11).generator()
    assert effective_sample_size(g.standard_normal(20_000)) == pytest.approx(20_000, rel=0.1)
    n, rho = 50_000, 0.9
    x = np.zeros(n)
    e = g.standard_normal(n)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + e[t]
    assert effective_sample_size(x) == pytest.approx(n * (1 - rho) / (1 + rho), rel=0.2)
    assert effective_sample_size(np.ones(10)) == 10.0


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def test_rw_sv_degenerate_predictive():
    M = 6
    h = np.linspace(-3, 1, M)
    store = make_store(M, 2, ModelFlags(True, False, False, True), h_last=h, mu=np.full(M, 0.3),
                       rho=np.ones(M), sigma2=np.zeros(M))
    pd = one_step_predictive(store, np.array([0.4, -1.2]), RngStream(12).generator())
    assert np.all(pd.location == 0.0)
    assert np.allclose(pd.logvar, h)
    assert np.all(np.isinf(pd.dof))


def test_t_obs_predictive_carries_dof():
    M = 4
    store = make_store(M, 1, ModelFlags(False, True, False, False), nu=np.array([3.0, 4.0, 5.0, 6.0]))
    pd = one_step_predictive(store, np.ones(1), RngStream(13).generator())
    assert np.array_equal(pd.dof, [3.0, 4.0, 5.0, 6.0])


def test_predictive_dimension_mismatch():
    with pytest.raises(ParameterError):
        one_step_predictive(make_store(3, 2), np.ones(3), RngStream(0).generator())


def test_predictive_location_formula():
    M, K = 5, 2
    g = RngStream(14).generator()
    store = make_store(M, K, ModelFlags(True, False, False, True), beta0=g.standard_normal((M, K)),
                       sqrt_v=g.uniform(0, 0.2, (M, K)), b_last=g.standard_normal((M, K)))
    x = np.array([1.0, -0.5])
    g1 = RngStream(15).generator()
    pd = one_step_predictive(store, x, g1)
    g2 = RngStream(15).generator()
    A = store.arrays
    g2.standard_normal(M)            # h_{T+1} innovations come first
    b_next = A["b_last"] + g2.standard_normal((M, K))
    assert np.allclose(pd.location, (A["beta0"] + A["sqrt_v"] * b_next) @ x, atol=1e-14)


def test_predictive_mean_matches_simulation():
    d = run_chain(small_data(T=60, seed=2), SamplerConfig(n_iter=300, n_burn=100, flags=FULL))
    pd = one_step_predictive(d, np.array([0.5, 1.0]), RngStream(16).generator())
    y = pd.sample(RngStream(17).generator(), size=200_000)
    sd = math.sqrt(np.var(y))
    assert abs(y.mean() - pd.mean()) < 4 * sd / math.sqrt(y.size)


def test_lps_standard_normal():
    pd = PredictiveDensity([0.0], [0.0], [np.inf])
    assert log_predictive_score(pd, 0.0) == pytest.approx(-0.91894, abs=1e-5)
    assert log_predictive_score(pd, 0.0) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)


def test_lps_identical_draws():
    one = PredictiveDensity([0.3], [-1.0], [5.0])
    many = PredictiveDensity([0.3] * 7, [-1.0] * 7, [5.0] * 7)
    assert log_predictive_score(many, 0.9) == pytest.approx(log_predictive_score(one, 0.9), abs=1e-14)


def direct_lps(loc, logvar, dof, y):
    dens = [stats.t(d, l, math.exp(0.5 * h)).pdf(y) if np.isfinite(d) else stats.norm(l, math.exp(0.5 * h)).pdf(y)
            for l, h, d in zip(loc, logvar, dof)]
    return math.log(sum(dens) / len(dens))


def test_lps_three_draws_direct_sum():
    loc, lv, dof = [0.1, -0.4, 0.02], [-2.0, -1.0, -3.5], [4.0, np.inf, 7.5]
    pd = PredictiveDensity(loc, lv, dof)
    for y in (-0.5, 0.0, 0.33, 1.2):
        assert abs(log_predictive_score(pd, y) - direct_lps(loc, lv, dof, y)) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-6, 2), st.sampled_from([2.5, 4.0, 10.0, np.inf])),
                min_size=1, max_size=8), st.floats(-3, 3))
def test_lps_logsumexp_equals_direct(draws, y):
    loc, lv, dof = map(list, zip(*draws))
    direct = direct_lps(loc, lv, dof, y)
    if direct > -700:
        assert abs(log_predictive_score(PredictiveDensity(loc, lv, dof), y) - direct) < 1e-12 * max(1, abs(direct))


def test_lps_finite_far_outside():
    pd = PredictiveDensity([0.0, 0.1], [-8.0, -8.0], [np.inf, np.inf])
    assert np.isfinite(log_predictive_score(pd, 50.0))


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def test_simulate_nested_linear_regression():
    beta0 = np.array([1.0, -2.0, 0.5])
    truth = TruthParams(beta0, np.zeros(3), SvParams(math.log(0.25), 0.0, 0.0))
    sim = simulate_dgp(truth, 5000, seed=1)
    X, y = sim.data.X, sim.data.y
    coef, res, *_ = np.linalg.lstsq(X, y, rcond=None)
    assert np.allclose(coef, beta0, atol=0.03)
    assert np.allclose(sim.beta, beta0[None, :])
    assert np.var(y - X @ beta0) == pytest.approx(0.25, rel=0.05)
    assert np.all(sim.tau == 1.0) and np.all(sim.xi == 1.0)


def test_simulate_kurtosis_ordering():
    k = []
    for nu in (3.0, 50.0):
        truth = TruthParams(np.zeros(1), np.zeros(1), SvParams(0.0, 0.0, 0.0), nu=nu)
        sim = simulate_dgp(truth, 10_000, seed=2)
        k.append(stats.kurtosis(sim.data.y))
    assert k[0] > k[1]


def test_simulate_reproducible():
    truth = TruthParams(np.ones(2), np.full(2, 0.1), nu=5.0, kappa=np.array([4.0, 4.0]))
    a, b = simulate_dgp(truth, 50, seed=3), simulate_dgp(truth, 50, seed=3)
    assert np.array_equal(a.data.y, b.data.y) and np.array_equal(a.beta, b.beta)
    c = simulate_dgp(truth, 50, seed=4)
    assert not np.array_equal(a.data.y, c.data.y)


@pytest.mark.slow
def test_strong_signal_recovery_of_beta0():
    """Posterior mean within two posterior sd of the planted beta0 in >= 90% of replications."""
    truth = TruthParams(np.array([1.0, -0.8]), np.full(2, 0.01), SvParams(-4.0, 0.9, 0.02))
    hits = []
    for r in range(50):
        sim = simulate_dgp(truth, 200, seed=500 + r)
        d = run_chain(sim.data, SamplerConfig(n_iter=1200, n_burn=400, flags=ModelFlags(True, False, False, True)),
                      rng=RngStream(5, r).generator())
        m, s = d["beta0"].mean(0), d["beta0"].std(0)
        hits.append(np.abs(m - truth.beta0) <= 2 * s)
    assert np.mean(hits) >= 0.9, np.mean(hits)
