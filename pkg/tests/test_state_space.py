import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from tvpshrink.errors import NumericalError, ParameterError
from tvpshrink.oracles import dense_state_posterior
from tvpshrink.rngdist import RngStream
from tvpshrink.state_space import SsmInputs, ffbs_draw, kalman_filter, marginal_loglik


def precision_oracle(inp):
    """Posterior of vec(b) (time-major) via the joint precision of the stacked path."""
    T, K = inp.T, inp.K
    n = T * K
    D = np.eye(n) - np.eye(n, k=-K)           # eta = D b
    Qinv = np.diag(1.0 / inp.state_var.ravel())
    H = np.zeros((T, n))
    for t in range(T):
        H[t, t * K:(t + 1) * K] = inp.loadings[t]
    Rinv = np.diag(1.0 / inp.obs_var)
    prec = D.T @ Qinv @ D + H.T @ Rinv @ H
    cov = np.linalg.inv(prec)
    mean = np.linalg.solve(prec, H.T @ Rinv @ inp.obs)
    prior_cov = np.linalg.inv(D.T @ Qinv @ D)
    ll = stats.multivariate_normal(np.zeros(T), H @ prior_cov @ H.T + np.diag(inp.obs_var)).logpdf(inp.obs)
    return mean, cov, ll


def random_inputs(rng, T, K):
    return SsmInputs(rng.standard_normal(T), rng.standard_normal((T, K)),
                     rng.uniform(0.3, 2.0, T), rng.uniform(0.1, 1.5, (T, K)))


def test_scalar_conjugate_update():
    L, R, Q, y = 1.7, 0.6, 2.2, 0.9
    inp = SsmInputs([y], [[L]], [R], [[Q]])
    g = RngStream(1).generator()
    b = np.array([ffbs_draw(inp, g).b[0, 0] for _ in range(100_000)])
    mean, var = Q * L * y / (L * L * Q + R), Q * R / (L * L * Q + R)
    assert abs(b.mean() - mean) < 4 * math.sqrt(var / b.size)
    assert b.var() == pytest.approx(var, rel=0.02)
    m, P, _ = kalman_filter(inp)
    assert m[0, 0] == pytest.approx(mean, rel=1e-13)
    assert P[0, 0, 0] == pytest.approx(var, rel=1e-13)


def test_zero_loadings_gives_prior_random_walk():
    T, K = 6, 2
    g = RngStream(2).generator()
    q = g.uniform(0.2, 1.0, (T, K))
    inp = SsmInputs(g.standard_normal(T), np.zeros((T, K)), np.ones(T), q)
    B = np.array([ffbs_draw(inp, g).b for _ in range(40_000)])
    assert np.allclose(B.var(axis=0), np.cumsum(q, axis=0), rtol=0.04)
    assert np.all(np.abs(B.mean(axis=0)) < 4 * np.sqrt(np.cumsum(q, axis=0) / 40_000))


@pytest.mark.parametrize("seed", range(4))
def test_ffbs_moments_match_dense_oracle(seed):
    g = RngStream(3, seed).generator()
    inp = random_inputs(g, 3, 2)
    mean, cov, _ = precision_oracle(inp)
    n = 100_000
    B = np.array([ffbs_draw(inp, g).b.ravel() for _ in range(n)])
    z = (B.mean(0) - mean) / np.sqrt(np.diag(cov) / n)
    assert np.max(np.abs(z)) < 4
    assert np.linalg.norm(np.cov(B.T) - cov) / np.linalg.norm(cov) < 0.05


@pytest.mark.parametrize("T,K", [(1, 1), (2, 2), (4, 2), (5, 1), (3, 3)])
def test_oracles_agree(T, K):
    inp = random_inputs(RngStream(4, T * 10 + K).generator(), T, K)
    m1, c1, l1 = precision_oracle(inp)
    m2, c2, l2 = dense_state_posterior(inp)
    assert np.allclose(m1, m2, atol=1e-10) and np.allclose(c1, c2, atol=1e-10)
    assert l1 == pytest.approx(l2, abs=1e-10)


def test_marginal_loglik_dense_example():
    inp = random_inputs(RngStream(5).generator(), 4, 2)
    assert abs(marginal_loglik(inp) - precision_oracle(inp)[2]) < 1e-8


def test_marginal_loglik_trivial_cases():
    g = RngStream(6).generator()
    inp = SsmInputs(g.standard_normal(5), np.zeros((5, 2)), g.uniform(0.5, 2, 5), np.ones((5, 2)))
    direct = np.sum(stats.norm.logpdf(inp.obs, 0, np.sqrt(inp.obs_var)))
    assert marginal_loglik(inp) == pytest.approx(direct, abs=1e-12)
    L, R, Q, y = 0.8, 1.3, 0.4, -0.7
    one = SsmInputs([y], [[L]], [R], [[Q]])
    assert marginal_loglik(one) == pytest.approx(stats.norm.logpdf(y, 0, math.sqrt(L * L * Q + R)), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), T=st.integers(1, 8), K=st.integers(1, 3), j=st.integers(0, 2))
def test_loglik_loading_sign_symmetry(seed, T, K, j):
    inp = random_inputs(np.random.default_rng(seed), T, K)
    flipped = inp.loadings.copy()
    flipped[:, j % K] *= -1
    other = SsmInputs(inp.obs, flipped, inp.obs_var, inp.state_var)
    assert marginal_loglik(other) == pytest.approx(marginal_loglik(inp), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), T=st.integers(1, 30), K=st.integers(1, 4))
def test_filter_covariances_psd(seed, T, K):
    g = np.random.default_rng(seed)
    inp = SsmInputs(g.standard_normal(T) * 10, g.standard_normal((T, K)) * 5,
                    10 ** g.uniform(-4, 2, T), 10 ** g.uniform(-6, 1, (T, K)))
    _, P, ll = kalman_filter(inp)
    assert np.isfinite(ll)
    assert np.allclose(P, np.transpose(P, (0, 2, 1)))
    assert np.min(np.linalg.eigvalsh(P)) > -1e-10


def test_determinism_and_shapes():
    inp = random_inputs(RngStream(7).generator(), 10, 3)
    a = ffbs_draw(inp, RngStream(9, 1).generator()).b
    b = ffbs_draw(inp, RngStream(9, 1).generator()).b
    assert a.shape == (10, 3) and np.array_equal(a, b)
    empty = SsmInputs(np.zeros(4), np.zeros((4, 0)), np.ones(4), np.zeros((4, 0)))
    assert ffbs_draw(empty, RngStream(0).generator()).b.shape == (4, 0)


def test_invalid_inputs():
    with pytest.raises(ParameterError):
        SsmInputs(np.zeros(3), np.ones((3, 1)), np.array([1.0, 0.0, 1.0]), np.ones((3, 1)))
    with pytest.raises(ParameterError):
        SsmInputs(np.zeros(3), np.ones((3, 2)), np.ones(3), np.ones((3, 1)))


def test_breakdown_reports_time_index():
    inp = SsmInputs(np.array([0.0, np.nan, 1.0]), np.ones((3, 1)), np.ones(3), np.ones((3, 1)))
    with pytest.raises(NumericalError) as info:
        marginal_loglik(inp)
    assert "time index" in str(info.value)
