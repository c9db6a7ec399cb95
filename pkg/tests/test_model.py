import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ztpcp.errors import ConfigError, DomainError
from ztpcp.model import (
    Hyperparams,
    active_factors,
    bernoulli_prob,
    cp_rate,
    cp_rates,
    init_state,
    log_likelihood,
    network_rate,
)
from ztpcp.samplers import make_rng
from ztpcp.tensor import SparseBinaryTensor


def test_cp_rate_examples():
    u = [np.full((2, 1), 0.5)] * 3
    assert cp_rate((0, 0, 0), u, [2.0]) == pytest.approx(0.25)
    assert cp_rate((1, 0, 1), u, [0.0]) == 0.0
    u2 = [np.full((2, 2), 0.5)] * 2
    assert cp_rate((0, 1), u2, [1.0, 3.0]) == pytest.approx(1.0)


def test_cp_rate_shape_errors():
    with pytest.raises(ConfigError):
        cp_rate((0, 0), [np.ones((2, 1))] * 3, [1.0])
    with pytest.raises(ConfigError):
        cp_rate((0, 0), [np.ones((2, 2))] * 2, [1.0])


def test_cp_rate_log_space_matches_direct():
    rng = np.random.default_rng(0)
    factors = [rng.dirichlet(np.ones(4), size=3).T for _ in range(6)]
    lam = rng.gamma(2.0, size=3)
    idx = rng.integers(0, 4, size=(20, 6))
    direct = np.array([sum(lam[r] * math.prod(u[i[k], r] for k, u in enumerate(factors)) for r in range(3)) for i in idx])
    assert np.allclose(cp_rates(idx, factors, lam), direct, rtol=1e-12)


def test_bernoulli_examples():
    assert bernoulli_prob(0.0) == 0.0
    assert bernoulli_prob(math.log(2)) == pytest.approx(0.5, abs=1e-15)
    assert bernoulli_prob(20.0) >= 1 - 3e-9
    with pytest.raises(DomainError):
        bernoulli_prob(-1.0)


@given(st.floats(0, 1e6))
def test_bernoulli_range(rate):
    p = bernoulli_prob(rate)
    assert 0.0 <= p <= 1.0


@pytest.mark.parametrize("rate", [0.1, 1.0, 3.0])
def test_bernoulli_matches_poisson_threshold(rate):
    n = 10**6
    freq = np.mean(make_rng(5).poisson(rate, n) >= 1)
    p = bernoulli_prob(rate)
    assert abs(freq - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_network_rate_examples():
    assert network_rate(0, 0, np.ones((1, 1)), [1.0]) == 1.0
    assert network_rate(0, 1, np.full((2, 2), 0.5), [0.0, 0.0]) == 0.0
    assert network_rate(0, 1, np.full((2, 2), 0.5), [2.0, 2.0]) == pytest.approx(1.0)


@given(st.integers(0, 2**16), st.permutations(range(4)))
@settings(max_examples=50, deadline=None)
def test_cp_rate_permutation_invariant(seed, perm):
    rng = np.random.default_rng(seed)
    factors = [rng.dirichlet(np.ones(3), size=4).T for _ in range(3)]
    lam = rng.gamma(1.0, size=4)
    idx = rng.integers(0, 3, size=(10, 3))
    perm = list(perm)
    a = cp_rates(idx, factors, lam)
    b = cp_rates(idx, [u[:, perm] for u in factors], lam[perm])
    assert np.allclose(a, b, rtol=1e-13)


def test_hyperparam_defaults():
    h = Hyperparams()
    assert h.R == 20 and h.epsilon == pytest.approx(0.05) and h.alpha == pytest.approx(0.05)
    assert h.g == 0.1 and h.f == 0.1 and h.a == 1.0 and h.c == 1.0 and h.d == 1.0
    with pytest.raises(ConfigError):
        Hyperparams(R=0)
    with pytest.raises(ConfigError):
        Hyperparams(epsilon=1.5)
    assert Hyperparams(R=2, a=(0.5, 2.0)).a_for(1) == 2.0


def test_init_state_columns_and_determinism():
    hyper = Hyperparams(R=20)
    s1 = init_state(make_rng(3), hyper, (7, 5, 4), [1])
    s2 = init_state(make_rng(3), hyper, (7, 5, 4), [1])
    for u in s1.factors:
        assert np.allclose(u.sum(axis=0), 1.0, atol=1e-9)
        assert np.all(u >= 0)
    for a, b in zip(s1.factors, s2.factors):
        assert np.array_equal(a, b)
    assert np.array_equal(s1.lam, s2.lam) and np.array_equal(s1.beta[1], s2.beta[1])
    assert s1.suff.s_total.sum() == 0


def test_init_p_prior_mean():
    hyper = Hyperparams(R=20)
    rng = make_rng(0)
    ps = np.concatenate([init_state(rng, hyper, (2, 2)).p for _ in range(10**4)])
    assert ps.mean() == pytest.approx(1 / 20, abs=0.01)


def test_active_factors_threshold():
    assert active_factors([5, 4.9, 1e-7], 1e-3).sum() == 2
    assert active_factors([2.0, 2.0, 2.0]).all()
    assert not active_factors([0.0, 0.0]).any()


def test_log_likelihood_matches_enumeration():
    rng = np.random.default_rng(2)
    shape = (3, 4, 2)
    factors = [rng.dirichlet(np.ones(n), size=2).T for n in shape]
    lam = np.array([3.0, 1.5])
    t = SparseBinaryTensor(shape, [(0, 0, 0), (2, 3, 1), (1, 2, 0)])
    from ztpcp.model import ParamSample

    params = ParamSample(factors, lam, np.full(2, 0.5))
    total = 0.0
    for cell in np.ndindex(*shape):
        p = bernoulli_prob(cp_rate(cell, factors, lam))
        total += math.log(p) if cell in t else math.log1p(-p)
    assert log_likelihood(t, params) == pytest.approx(total, rel=1e-12)
