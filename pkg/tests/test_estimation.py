import math

import numpy as np
import pytest

from contiflow import estimation as est
from contiflow import kawasaki as kw
from contiflow.config_space import Configuration, StepFunction, Torus, Window, sample_poisson
from contiflow.potentials import GaussianKernel, KawasakiRateParams, ZeroPotential

T20 = Torus(1, 20.0)
W = Window((0.0,), (3.0,))


@pytest.fixture(scope="module")
def poisson_ensemble():
    rng = np.random.default_rng(21)
    return [sample_poisson(0.8, T20, rng) for _ in range(3000)]


def test_density_calibration(poisson_ensemble):
    d = est.density(poisson_ensemble)
    assert abs(d.z_against(0.8)) < 3
    assert d.se == pytest.approx(math.sqrt(0.8 / 20 / 3000), rel=0.1)


def test_pair_correlation_poisson(poisson_ensemble):
    h = est.pair_correlation(poisson_ensemble, 3.0, n_bins=6)
    assert np.all(np.abs((h.g - 1.0) / h.g_se) < 3.5)
    assert np.all(np.abs(h.u2 / h.u2_se) < 3.5)
    assert not h.empty_bins.any()
    with pytest.raises(est.EstimationError):
        est.pair_correlation(poisson_ensemble, 11.0)


def test_laplace_functional_poisson(poisson_ensemble):
    c = 0.5
    e = est.laplace_functional(poisson_ensemble, StepFunction(W, -c))
    assert abs(e.z_against(math.exp(0.8 * 3 * (math.exp(-c) - 1)))) < 3
    one = est.laplace_functional(poisson_ensemble, StepFunction(W, 0.0))
    assert one.value == 1.0 and one.se == 0.0
    with pytest.raises(ValueError):
        est.laplace_functional(poisson_ensemble, StepFunction(W, 0.1))


def test_void_probability(poisson_ensemble):
    void = est.mean_estimate(est.window_counts(poisson_ensemble, W) == 0)
    assert abs(void.z_against(math.exp(-0.8 * 3))) < 3


def test_equal_time_covariance_is_campbell_variance(poisson_ensemble):
    f = StepFunction(W, 1.5)
    c = est.two_time_covariance(poisson_ensemble, poisson_ensemble, f, f)
    assert abs(c.z_against(0.8 * 1.5 ** 2 * 3)) < 3


def test_covariance_refuses_small_ensembles(poisson_ensemble):
    f = StepFunction(W, 1.0)
    with pytest.raises(est.EstimationError):
        est.two_time_covariance(poisson_ensemble[:29], poisson_ensemble[:29], f, f)
    with pytest.raises(est.EstimationError):
        est.two_time_covariance(poisson_ensemble[:40], poisson_ensemble[:41], f, f)


def test_estimators_translation_invariant(poisson_ensemble):
    shift = np.array([7.25])
    moved = [s.translated(shift) for s in poisson_ensemble[:300]]
    a = est.pair_correlation(poisson_ensemble[:300], 2.0, n_bins=4)
    b = est.pair_correlation(moved, 2.0, n_bins=4)
    assert np.array_equal(a.pair_counts, b.pair_counts)
    assert est.density(moved).value == est.density(poisson_ensemble[:300]).value
    f = StepFunction(W, 1.0)
    g = StepFunction(Window((7.25,), (10.25,)), 1.0)
    # counts shift with the window (a point exactly on a shifted edge is a measure-zero event)
    assert [est.linear_statistic(s, f) for s in poisson_ensemble[:300]] == \
        [est.linear_statistic(s, g) for s in moved]


def test_stationary_covariance_symmetric_in_f_and_g():
    free = KawasakiRateParams(ZeroPotential(), ZeroPotential(), GaussianKernel(1.0), 0.5)
    f = StepFunction(Window((0.0,), (2.0,)), 1.0)
    g = StepFunction(Window((1.0,), (4.0,)), 1.0)
    rng = np.random.default_rng(22)
    s0, s1 = [], []
    for _ in range(3000):
        a, b = kw.run(sample_poisson(1.0, T20, rng), free, 1.0, [0.0, 1.0], rng)
        s0.append(a)
        s1.append(b)
    fg = est.two_time_covariance(s0, s1, f, g)
    gf = est.two_time_covariance(s0, s1, g, f)
    exact = kw.free_covariance_torus(1.0, f, g, 1.0, 1.0, 0.5, 20.0)
    assert abs(fg.z_against(exact)) < 3 and abs(gf.z_against(exact)) < 3
    diff = est.paired_difference([est.linear_statistic(x, f) * est.linear_statistic(y, g)
                                  for x, y in zip(s0, s1)],
                                 [est.linear_statistic(x, g) * est.linear_statistic(y, f)
                                  for x, y in zip(s0, s1)])
    assert abs(diff.z_against(0.0)) < 3


def test_linear_statistic_edge_cases():
    f = StepFunction(W, 2.0)
    assert est.linear_statistic(Configuration(T20, None), f) == 0.0
    assert est.linear_statistic(np.array([[1.0], [2.5], [4.0]]), f) == 4.0
    with pytest.raises(est.EstimationError):
        est.mean_estimate([])
    with pytest.raises(est.EstimationError):
        est.paired_difference([1.0, 2.0], [1.0])


def test_poisson_gof_detects_overdispersion():
    rng = np.random.default_rng(23)
    good = rng.poisson(3.0, 5000)
    bad = rng.negative_binomial(3, 0.5, 5000)  # mean 3, variance 6
    assert est.poisson_gof_pvalue(good, 3.0) > 0.01
    assert est.poisson_gof_pvalue(bad, 3.0) < 1e-6


def test_estimate_arithmetic():
    a = est.EstimateWithError(1.0, 0.3, 10)
    b = est.EstimateWithError(0.4, 0.4, 20)
    assert est.joint_z(a, b) == pytest.approx(0.6 / 0.5)
    with pytest.raises(ValueError):
        est.EstimateWithError(0.0, -1.0, 1)
