import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from ztpcp.errors import DomainError
from ztpcp.samplers import (
    beta_sample,
    dirichlet_columns,
    dirichlet_sample,
    gamma_sample,
    make_rng,
    multinomial_sample,
    ztp_mean,
    ztp_sample,
    ztp_sample_array,
)


def ztp_oracle_mean(lam):
    return lam / (1.0 - np.exp(-lam))


def test_ztp_oracle_values():
    assert ztp_oracle_mean(1.0) == pytest.approx(1.5820, abs=1e-4)
    assert ztp_oracle_mean(10.0) == pytest.approx(10.00045, abs=1e-5)
    assert ztp_mean(3.0) == pytest.approx(ztp_oracle_mean(3.0))


@pytest.mark.parametrize("lam,expected", [(1.0, 1.5820), (10.0, 10.00045)])
def test_ztp_mean_examples(rng, lam, expected):
    draws = ztp_sample_array(rng, np.full(10**6, lam))
    assert draws.min() >= 1
    assert draws.mean() == pytest.approx(expected, rel=0.01)


@pytest.mark.parametrize("lam", [0.1, 1.0, 5.0])
def test_ztp_prob_of_one(rng, lam):
    n = 10**6
    draws = ztp_sample_array(rng, np.full(n, lam))
    p1 = lam * np.exp(-lam) / (1 - np.exp(-lam))
    se = np.sqrt(p1 * (1 - p1) / n)
    assert abs(np.mean(draws == 1) - p1) < 3 * se


def test_ztp_chi_square_small_rate(rng):
    lam, n = 0.5, 10**6
    draws = ztp_sample_array(rng, np.full(n, lam))
    k = np.arange(1, 11)
    pmf = stats.poisson.pmf(k, lam) / (1 - np.exp(-lam))
    observed = np.array([np.sum(draws == i) for i in k[:-1]] + [np.sum(draws >= 10)])
    expected = n * np.r_[pmf[:-1], 1 - pmf[:-1].sum()]
    # pool sparse tail cells so every expected count is at least 5
    keep = expected >= 5
    obs = np.r_[observed[keep], observed[~keep].sum()]
    exp = np.r_[expected[keep], expected[~keep].sum()]
    if exp[-1] == 0:
        obs, exp = obs[:-1], exp[:-1]
    _, pval = stats.chisquare(obs, exp)
    assert pval > 0.001


@given(st.floats(min_value=1e-12, max_value=1e3))
@settings(max_examples=50, deadline=None)
def test_ztp_support(lam):
    draws = ztp_sample_array(make_rng(0), np.full(200, lam))
    assert draws.min() >= 1


def test_ztp_tiny_rate_returns_one(rng):
    assert np.all(ztp_sample_array(rng, np.full(1000, 1e-300)) == 1)


def test_ztp_rejects_bad_rate(rng):
    with pytest.raises(DomainError):
        ztp_sample(rng, 0.0)
    with pytest.raises(DomainError):
        ztp_sample_array(rng, [1.0, np.nan])


def test_determinism():
    a = ztp_sample_array(make_rng(7, 3), np.linspace(0.1, 20, 100))
    b = ztp_sample_array(make_rng(7, 3), np.linspace(0.1, 20, 100))
    c = ztp_sample_array(make_rng(7, 4), np.linspace(0.1, 20, 100))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.array_equal(dirichlet_sample(make_rng(1), [1, 2, 3]), dirichlet_sample(make_rng(1), [1, 2, 3]))


def test_dirichlet_means(rng):
    d = dirichlet_columns(rng, np.tile([[1.0], [1.0]], (1, 10**5)))
    assert d.mean(axis=1) == pytest.approx([0.5, 0.5], abs=0.01)
    d = dirichlet_columns(rng, np.tile([[2.0], [1.0], [1.0]], (1, 10**5)))
    assert d.mean(axis=1) == pytest.approx([0.5, 0.25, 0.25], abs=0.01)


def test_dirichlet_degenerate(rng):
    for _ in range(10):
        assert np.array_equal(dirichlet_sample(rng, [3.0]), [1.0])


def test_dirichlet_small_concentration_stays_on_simplex(rng):
    d = dirichlet_columns(rng, np.full((50, 200), 1e-3))
    assert np.all(np.isfinite(d))
    assert np.allclose(d.sum(axis=0), 1.0, atol=1e-12)


def test_multinomial_examples(rng):
    assert np.array_equal(multinomial_sample(rng, 0, [0.25, 0.75]), [0, 0])
    c = multinomial_sample(rng, 10**6, [0.25, 0.75])
    assert c / 10**6 == pytest.approx([0.25, 0.75], abs=0.002)
    with pytest.raises(DomainError):
        multinomial_sample(rng, 3, [0.5, 0.6])


def test_gamma_mean(rng):
    g = gamma_sample(rng, np.full(10**6, 2.0), 3.0)
    assert g.mean() == pytest.approx(6.0, rel=0.01)


def test_gamma_tiny_shape_positive(rng):
    assert np.all(gamma_sample(rng, np.full(10**4, 1e-3), 1.0) > 0)


def test_beta_open_interval(rng):
    b = beta_sample(rng, np.full(10**4, 1e-3), 1e-3)
    assert np.all((b > 0) & (b < 1))
    with pytest.raises(DomainError):
        beta_sample(rng, 0.0, 1.0)
