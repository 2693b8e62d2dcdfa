import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats
from scipy.special import digamma

from tvpshrink.errors import ParameterError
from tvpshrink.rngdist import RngStream
from tvpshrink.stochvol import (LOG_OFFSET, MIX_MEANS, MIX_VARS, MIX_WEIGHTS, SvParams, SvPriors,
                                SvState, draw_indicators, draw_log_volatility, draw_sv_block,
                                log_volatility_posterior, mixture_probabilities, simulate_sv_path,
                                sv_forecast)


def dense_h_posterior(ystar, cmean, cvar, p):
    """Dense precision construction for h_{0:T} given ystar_t = h_t + cmean_t + N(0, cvar_t)."""
    T = ystar.shape[0]
    n = T + 1
    A = np.eye(n)                      # rows: scaled innovations
    A[0, 0] = math.sqrt(1 - p.rho ** 2)
    for t in range(1, n):
        A[t, t - 1] = -p.rho
    prior_prec = A.T @ A / p.sigma2
    prior_mean = np.full(n, p.mu)
    Hm = np.zeros((T, n))
    Hm[np.arange(T), np.arange(1, n)] = 1.0
    prec = prior_prec + Hm.T @ np.diag(1 / cvar) @ Hm
    mean = np.linalg.solve(prec, prior_prec @ prior_mean + Hm.T @ ((ystar - cmean) / cvar))
    return mean, np.linalg.inv(prec)


def test_mixture_table():
    assert abs(MIX_WEIGHTS.sum() - 1.0) < 1e-4
    assert len(MIX_WEIGHTS) == len(MIX_MEANS) == len(MIX_VARS) == 10
    # E[log chi^2_1] = digamma(1/2) + log 2
    exact = digamma(0.5) + math.log(2.0)
    quad = integrate.quad(lambda x: math.log(x) * stats.chi2(1).pdf(x), 0, np.inf)[0]
    assert quad == pytest.approx(exact, abs=1e-8)
    mix_mean = np.dot(MIX_WEIGHTS, MIX_MEANS) / MIX_WEIGHTS.sum()
    assert abs(mix_mean - exact) < 1e-3


@settings(max_examples=100, deadline=None)
@given(y=st.lists(st.floats(-40, 10), min_size=1, max_size=20), shift=st.floats(-20, 20))
def test_mixture_probabilities_sum_to_one(y, shift):
    y = np.array(y)
    p = mixture_probabilities(y, y + shift)
    assert np.all(p >= 0)
    assert np.all(np.abs(p.sum(axis=1) - 1.0) < 1e-12)


@pytest.mark.parametrize("T", [1, 5, 30])
def test_identical_components_match_dense_oracle(T):
    g = RngStream(1, T).generator()
    p = SvParams(-1.0, 0.85, 0.3)
    ystar = g.normal(-2, 2, T)
    ind = np.full(T, 3)
    mean, _ = log_volatility_posterior(ystar, MIX_MEANS[ind], MIX_VARS[ind], p)
    dmean, _ = dense_h_posterior(ystar, MIX_MEANS[ind], MIX_VARS[ind], p)
    assert np.max(np.abs(mean - dmean)) < 1e-8


def test_h_draws_match_dense_oracle_given_indicators():
    g = RngStream(2).generator()
    T = 6
    p = SvParams(0.5, 0.7, 0.5)
    ystar = g.normal(0, 2, T)
    ind = g.integers(0, 10, T)
    dmean, dcov = dense_h_posterior(ystar, MIX_MEANS[ind], MIX_VARS[ind], p)
    n = 50_000
    H = np.array([draw_log_volatility(ystar, ind, p, g) for _ in range(n)])
    z = (H.mean(0) - dmean) / np.sqrt(np.diag(dcov) / n)
    assert np.max(np.abs(z)) < 4
    assert np.allclose(H.var(0), np.diag(dcov), rtol=0.04)


def test_degenerate_state_equation():
    p = SvParams(-0.7, 0.0, 1e-14)
    ystar = np.array([3.0, -5.0, 0.0, 2.0])
    mean, _ = log_volatility_posterior(ystar, MIX_MEANS[[4] * 4], MIX_VARS[[4] * 4], p)
    assert np.allclose(mean, -0.7, atol=1e-10)


def test_sv_forecast():
    g = RngStream(3).generator()
    p = SvParams(-1.0, 0.9, 0.04)
    assert sv_forecast(0.0, SvParams(-1.0, 0.9, 0.0), g) == pytest.approx(-0.1, abs=1e-15)
    x = sv_forecast(0.0, p, g, size=100_000)
    assert abs(x.mean() + 0.1) < 4 * math.sqrt(0.04 / x.size)
    # var of sample variance of a normal: 2 sigma^4 / (n-1)
    assert abs(x.var() - 0.04) < 4 * math.sqrt(2 * 0.04 ** 2 / x.size)
    x = sv_forecast(2.0, SvParams(1.5, 0.0, 0.25), g, size=100_000)
    assert abs(x.mean() - 1.5) < 4 * math.sqrt(0.25 / x.size)
    assert abs(x.var() - 0.25) < 4 * math.sqrt(2 * 0.25 ** 2 / x.size)


def test_invalid_params():
    with pytest.raises(ParameterError):
        SvParams(0.0, 1.0, 0.1)
    with pytest.raises(ParameterError):
        SvParams(0.0, 0.5, -0.1)
    st_ = SvState(np.zeros(1), SvParams(0.0, 0.5, 0.1))
    with pytest.raises(ParameterError):
        draw_sv_block(np.zeros(0), st_, SvPriors(), RngStream(0).generator())


def test_block_keeps_parameters_in_support():
    g = RngStream(4).generator()
    priors = SvPriors()
    for resid in [np.zeros(30), 1e3 * g.standard_normal(30), np.r_[np.zeros(15), 1e-6 * np.ones(15)],
                  g.standard_normal(30)]:
        state = SvState(np.zeros(31), SvParams(0.0, 0.9, 0.1))
        for _ in range(200):
            state = draw_sv_block(resid, state, priors, g)
            assert -1 < state.params.rho < 1
            assert state.params.sigma2 > 0
            assert np.all(np.isfinite(state.h))


def test_update_disabled_keeps_params():
    g = RngStream(5).generator()
    p = SvParams(0.2, 0.5, 0.3)
    state = draw_sv_block(g.standard_normal(10), SvState(np.zeros(11), p), SvPriors(), g, update_params=False)
    assert state.params == p
    assert state.indicators.shape == (10,)


def test_offset_guards_zero_residuals():
    assert LOG_OFFSET == 1e-8
    g = RngStream(6).generator()
    state = draw_sv_block(np.zeros(5), SvState(np.zeros(6), SvParams(0.0, 0.5, 0.1)), SvPriors(), g)
    assert np.all(np.isfinite(state.h))


def test_determinism():
    resid = RngStream(7).generator().standard_normal(20)
    s0 = SvState(np.zeros(21), SvParams(0.0, 0.9, 0.1))
    a = draw_sv_block(resid, s0, SvPriors(), RngStream(8).generator())
    b = draw_sv_block(resid, s0, SvPriors(), RngStream(8).generator())
    assert np.array_equal(a.h, b.h) and a.params == b.params


@pytest.mark.slow
def test_sv_block_joint_distribution():
    """Successive-conditional simulation keeps (mu, rho, sigma2, h) at the prior.

    Each chain starts from the prior and alternates data simulation with the
    block update; final states of independent chains are i.i.d. prior draws
    when the block is correct, and are compared to direct prior draws.
    """
    T, n_chains, n_cycles = 20, 2000, 5
    priors = SvPriors()
    g = RngStream(9).generator()
    final = []
    for c in range(n_chains):
        p = priors.sample(g)
        state = SvState(simulate_sv_path(T, p, g), p)
        for _ in range(n_cycles):
            r = np.exp(0.5 * state.h[1:]) * g.standard_normal(T)
            state = draw_sv_block(r, state, priors, g)
        q = state.params
        final.append((q.mu, q.rho, q.sigma2, state.h[5], state.h[10], state.h[15]))
    final = np.array(final)
    ref = []
    for c in range(n_chains):
        p = priors.sample(g)
        h = simulate_sv_path(T, p, g)
        ref.append((p.mu, p.rho, p.sigma2, h[5], h[10], h[15]))
    ref = np.array(ref)
    for j in range(final.shape[1]):
        assert stats.ks_2samp(final[:, j], ref[:, j]).pvalue > 0.01
    # mu against its N(0, 10^2) prior directly
    assert stats.kstest(final[:, 0], stats.norm(0, 10).cdf).pvalue > 0.01
