import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causalaug.errors import InvalidDimensionError, InvalidSpecError
from causalaug.scm import (
    Fixed, InterventionSpec, LinearGaussianScm, Node, Noise, StandardNormal, Uniform,
    analytic_covariance, random_scm, sample_interventional, sample_observational,
)
from oracles import cov_dy_loop

DO_D = InterventionSpec(Node.D, Noise(StandardNormal()))


def _max_abs_corr(a, b):
    k = a.shape[1]
    c = np.corrcoef(a.T, b.T)[:k, k:]
    return float(np.abs(c).max())


def test_random_scm_shapes_and_determinism():
    a = random_scm(5, 1.0, 0.1, np.random.default_rng(3))
    b = random_scm(5, 1.0, 0.1, np.random.default_rng(3))
    assert a.dim == 5 and a.sigma_c == 1.0 and a.sigma == 0.1
    for name in ("W_cd", "W_cy", "W_dh", "W_yh"):
        assert getattr(a, name).shape == (5, 5)
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert random_scm(1, 1.0, 0.1, np.random.default_rng(0)).W_cd.shape == (1, 1)


def test_invalid_construction():
    with pytest.raises(InvalidDimensionError):
        random_scm(0, 1.0, 0.1, np.random.default_rng(0))
    with pytest.raises(InvalidDimensionError):
        LinearGaussianScm(np.eye(2), np.eye(3), np.eye(2), np.eye(2))
    with pytest.raises(InvalidSpecError):
        LinearGaussianScm(np.eye(2), np.eye(2), np.eye(2), np.eye(2), sigma=-1.0)
    with pytest.raises(InvalidSpecError):
        Uniform(1.0, 0.0)
    with pytest.raises(InvalidSpecError):
        Node.parse("c")


def test_weights_read_only():
    scm = random_scm(3, 1.0, 0.1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        scm.W_cd[0, 0] = 1.0


def test_sample_structure(rng):
    scm = random_scm(4, 1.0, 0.1, rng)
    s = sample_observational(scm, 50, rng)
    assert len(s) == 50
    np.testing.assert_array_equal(s.x[:, :4], s.h_d)
    np.testing.assert_array_equal(s.x[:, 4:], s.h_y)
    np.testing.assert_array_equal(s.target, s.y.sum(axis=1))
    one = s[7]
    assert one.target == float(s.y[7].sum())
    assert len(list(s)) == 50


def test_noiseless_zero_fixed_point(rng):
    scm = random_scm(5, 0.0, 0.0, rng)
    s = sample_observational(scm, 20, rng)
    for arr in (s.c, s.d, s.y, s.h_d, s.h_y, s.x, s.target):
        assert not np.any(arr)


def test_determinism():
    scm = random_scm(5, 1.0, 0.1, np.random.default_rng(0))
    a = sample_interventional(scm, DO_D, 100, np.random.default_rng(9))
    b = sample_interventional(scm, DO_D, 100, np.random.default_rng(9))
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.target, b.target)


def test_analytic_covariance_matches_loop_oracle():
    scm = random_scm(3, 1.3, 0.1, np.random.default_rng(1))
    cov = analytic_covariance(scm)
    np.testing.assert_allclose(cov[("d", "y")], cov_dy_loop(scm.W_cd.tolist(), scm.W_cy.tolist(), 1.3),
                               rtol=1e-12, atol=1e-12)


def test_empirical_cov_dy_matches_analytic():
    rng = np.random.default_rng(2)
    scm = random_scm(5, 1.0, 0.1, rng)
    s = sample_observational(scm, 100_000, rng)
    n = len(s)
    dc = s.d - s.d.mean(0)
    yc = s.y - s.y.mean(0)
    emp = dc.T @ yc / (n - 1)
    # standard error of each product-moment estimate
    se = np.sqrt(((dc[:, :, None] * yc[:, None, :]) ** 2).mean(0) / n)
    expected = analytic_covariance(scm)[("d", "y")]
    # 25 entries at 3 SE: occasional single misses are expected
    assert np.mean(np.abs(emp - expected) <= 3 * se) >= 0.9


def test_observational_hd_y_spurious_correlation():
    hits = 0
    for seed in range(40):
        rng = np.random.default_rng(seed)
        scm = random_scm(5, 1.0, 0.1, rng)
        s = sample_observational(scm, 100_000, rng)
        hits += _max_abs_corr(s.h_d, s.y) > 0.1
    assert hits / 40 >= 0.95


@pytest.mark.parametrize("kind", [Noise(StandardNormal()), Noise(Uniform(-2, 2)), Fixed(np.ones(5))])
def test_do_d_removes_hd_y_correlation(kind):
    rng = np.random.default_rng(4)
    scm = random_scm(5, 1.0, 0.1, rng)
    s = sample_interventional(scm, InterventionSpec(Node.D, kind), 100_000, rng)
    assert _max_abs_corr(s.h_d, s.y) < 0.02


def test_do_d_leaves_non_descendants_identical():
    scm = random_scm(5, 1.0, 0.1, np.random.default_rng(0))
    obs = sample_observational(scm, 200, np.random.default_rng(5))
    do = sample_interventional(scm, DO_D, 200, np.random.default_rng(5))
    np.testing.assert_array_equal(obs.c, do.c)
    np.testing.assert_array_equal(obs.y, do.y)
    np.testing.assert_array_equal(obs.h_y, do.h_y)
    assert not np.array_equal(obs.d, do.d)


def test_fixed_zero_on_d_leaves_pure_noise():
    rng = np.random.default_rng(6)
    scm = random_scm(5, 1.0, 0.1, rng)
    s = sample_interventional(scm, InterventionSpec("d", Fixed(np.zeros(5))), 50_000, rng)
    assert not np.any(s.d)
    assert abs(s.h_d.std() - 0.1) < 0.002
    assert abs(s.h_d.mean()) < 0.002


def test_fixed_value_length_checked(rng):
    scm = random_scm(5, 1.0, 0.1, rng)
    with pytest.raises(InvalidDimensionError):
        sample_interventional(scm, InterventionSpec(Node.D, Fixed(np.zeros(4))), 3, rng)
    with pytest.raises(InvalidDimensionError):
        sample_observational(scm, 0, rng)


def test_y_marginal_unchanged_under_do_d():
    from scipy.stats import ks_2samp

    scm = random_scm(5, 1.0, 0.1, np.random.default_rng(0))
    obs = sample_observational(scm, 20_000, np.random.default_rng(10))
    do = sample_interventional(scm, DO_D, 20_000, np.random.default_rng(11))
    for j in range(5):
        assert ks_2samp(obs.y[:, j], do.y[:, j]).pvalue > 1e-3


@settings(max_examples=25, deadline=None)
@given(dim=st.integers(1, 6), n=st.integers(1, 30), seed=st.integers(0, 2**32 - 1),
       node=st.sampled_from(list(Node)))
def test_structural_invariants_property(dim, n, seed, node):
    rng = np.random.default_rng(seed)
    scm = random_scm(dim, 1.0, 0.1, rng)
    s = sample_interventional(scm, InterventionSpec(node, Noise()), n, rng)
    assert s.x.shape == (n, 2 * dim)
    np.testing.assert_array_equal(s.x, np.hstack([s.h_d, s.h_y]))
    np.testing.assert_array_equal(s.target, s.y.sum(1))
