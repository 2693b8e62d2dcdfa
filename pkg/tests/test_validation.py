import math

import numpy as np
import pytest

from tvpshrink.dataset import Dataset, add_months, from_month_index, month_index, month_range
from tvpshrink.errors import DataError
from tvpshrink.oracles import oracle_suite
from tvpshrink.rngdist import RngStream
from tvpshrink.sampler import ModelPriors
from tvpshrink.validation import (MODEL_FLAGS, GewekeResult, geweke_test, prior_moments,
                                  sample_prior_state)


def test_month_arithmetic():
    assert add_months(195612, 1) == 195701
    assert add_months(195701, -1) == 195612
    assert add_months(192612, 12 * 84) == 201012
    assert from_month_index(month_index(200406)) == 200406
    assert month_range(200011, 200102) == [200011, 200012, 200101, 200102]
    with pytest.raises(DataError):
        month_index(200013)


def test_dataset_validation():
    with pytest.raises(DataError, match="gap"):
        Dataset([200001, 200003], [0.0, 0.0], np.zeros((2, 1)))
    with pytest.raises(DataError, match="increasing"):
        Dataset([200002, 200001], [0.0, 0.0], np.zeros((2, 1)))
    ds = Dataset([200001, 200002, 200003], [1.0, 2.0, 3.0], np.zeros((3, 2)))
    assert ds.names == ["x0", "x1"] and ds.window(200002, 200003) == slice(1, 3)
    with pytest.raises(DataError):
        ds.row(200004)


@pytest.mark.slow
@pytest.mark.parametrize("model", list(MODEL_FLAGS))
def test_prior_sampler_matches_exact_moments(model):
    """Ancestral prior draws agree with the closed-form moments used by the joint test."""
    flags = MODEL_FLAGS[model]
    K, n = 2, 20_000
    exact = prior_moments(K, flags, ModelPriors(), h_times=(5,), robust=True)
    g = RngStream(1, len(model)).generator()
    vals = {k: [] for k in exact}
    for _ in range(n):
        s = sample_prior_state(8, K, flags, ModelPriors(), g)
        a = s.dl.alpha
        for j in range(K):
            vals[f"beta0_{j}"].append(a[j])
            vals[f"sqrt_v_{j}"].append(a[K + j])
            vals[f"root_beta0_{j}"].append(math.sqrt(abs(a[j])))
            vals[f"root_sqrt_v_{j}"].append(math.sqrt(abs(a[K + j])))
            if f"kappa_{j}" in vals:
                vals[f"kappa_{j}"].append(s.dof.kappa[j])
        if "nu" in vals:
            vals["nu"].append(s.dof.nu)
        p = s.sv.params
        vals["mu"].append(p.mu)
        vals["rho"].append(p.rho)
        vals["sigma2"].append(p.sigma2)
        vals["h_5"].append(s.sv.h[5])
    for k, (m1, m2) in exact.items():
        x = np.array(vals[k])
        if k.startswith(("beta0", "sqrt_v")):
            # heavy tails: compare the median of |alpha| and E|alpha| via the root monitors
            assert abs(np.median(x)) < 0.05
            continue
        assert abs(x.mean() - m1) < 4.5 * x.std() / math.sqrt(n), k


def test_second_moment_formula():
    # E[alpha^2] = 8 a (a + 1) under DL(a)
    for K in (1, 2, 14):
        a = 1 / (2 * K)
        m = prior_moments(K, MODEL_FLAGS["TVP-SV DL"], ModelPriors())
        assert m["beta0_0"] == (0.0, pytest.approx(8 * a * (a + 1)))


def test_geweke_result_reporting():
    r = GewekeResult("m", {"mu": (0.5, -1.0), "rho": (3.5, 0.0)}, {}, {}, 10)
    assert r.passed("mu") and not r.passed("rho") and not r.passed()
    lines = r.lines()
    assert "PASS" in lines[0] and "FAIL" in lines[1]


def test_geweke_smoke():
    res = geweke_test(MODEL_FLAGS["t-TVP-SV DL 3"], T=10, K=1, n_chains=4, n_cycles=3, robust=True)
    assert res.n_cycles == 12
    assert {"beta0_0", "sqrt_v_0", "nu", "kappa_0", "mu", "rho", "sigma2", "root_beta0_0"} <= set(res.z)
    assert all(np.isfinite(v).all() for v in res.z.values())


def test_oracle_suite_quick():
    res = oracle_suite(seed=0, quick=True)
    assert [n for n, _, _ in res] == ["gig_moments", "ffbs_mean", "ffbs_cov", "marginal_loglik"]
    assert all(ok for _, ok, _ in res), res
