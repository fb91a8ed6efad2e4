import math
import warnings

import numpy as np
import pytest

from contiflow import estimation as est
from contiflow import harmonic as hm
from contiflow.config_space import StepFunction, Torus, Window, min_image_dist
from contiflow.gibbs import GibbsParams, LowActivityWarning, gnz_residual, sample_gibbs
from contiflow.potentials import (ConfigurationError, HardCoreWell, SquareWell, ZeroPotential,
                                  energy)

T20 = Torus(1, 20.0)
LAMBDA = Window((0.0,), (5.0,))
# long-run time average over 3e6 chain events (batch-means SE 2e-4)
DENSITY_REF, DENSITY_REF_SE = 0.17828, 0.00020


def test_defaults_and_time_conversion():
    p = GibbsParams(SquareWell(1.0, 0.5), 0.2, T20)
    assert p.burn_in == 50 * 4 and p.thinning == 10 * 4
    assert p.reference_rate == pytest.approx(8.0)
    assert p.thinning_time == pytest.approx(5.0)


def test_unbounded_birth_factor_rejected():
    with pytest.raises(ConfigurationError):
        GibbsParams(SquareWell(-0.5, 0.5), 0.2, T20)


def test_low_activity_warning():
    with pytest.warns(LowActivityWarning):
        GibbsParams(SquareWell(1.0, 0.5), 2.0, T20)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        GibbsParams(SquareWell(1.0, 0.5), 0.2, T20)


def test_zero_potential_gives_poisson():
    samples = sample_gibbs(GibbsParams(ZeroPotential(), 0.5, T20), 3000, np.random.default_rng(1))
    counts = est.window_counts(samples, LAMBDA)
    assert est.poisson_gof_pvalue(counts, 2.5) > 0.01
    assert abs(est.density(samples).z_against(0.5)) < 3


def test_density_regression_constant(small_bank):
    d = est.density(small_bank)
    assert d.value < 0.2
    assert abs((d.value - DENSITY_REF) / math.hypot(d.se, DENSITY_REF_SE)) < 3


def test_hard_core_never_violated():
    phi = HardCoreWell(0.4, 0.2, 0.8)
    samples = sample_gibbs(GibbsParams(phi, 0.3, T20, check=False), 300, np.random.default_rng(2))
    for s in samples:
        p = s.positions
        if len(p) > 1:
            iu = np.triu_indices(len(p), 1)
            assert np.min(min_image_dist(p[iu[0]], p[iu[1]], T20)) >= 0.4


def test_gnz_poisson_indicator():
    samples = sample_gibbs(GibbsParams(ZeroPotential(), 0.4, T20), 2000, np.random.default_rng(3))
    r = gnz_residual(samples, ZeroPotential(), 0.4, lambda x, g, ex: 1.0, LAMBDA,
                     rng=np.random.default_rng(0))
    assert r.rhs.value == pytest.approx(0.4 * 5.0) and r.rhs.se == 0.0
    assert abs(r.lhs.z_against(2.0)) < 3


def test_gnz_test_potential(small_bank, test_well):
    def h(x, g, ex):
        return float(len(g.neighbors_within(x, 1.0, exclude=ex)))

    r = gnz_residual(small_bank, test_well, 0.2, h, LAMBDA, rng=np.random.default_rng(4))
    assert abs(r.z_score) < 3


def test_gnz_boltzmann_h_matches_u1_statistic(small_bank, test_well):
    def h(x, g, ex):
        return math.exp(energy(test_well, x, g, exclude=ex))

    r = gnz_residual(small_bank, test_well, 0.2, h, LAMBDA, rng=np.random.default_rng(5))
    lhs = hm.lemma1_lhs(small_bank, test_well, 1.0, StepFunction(LAMBDA, 1.0))
    assert r.lhs.value == pytest.approx(lhs.value, rel=1e-12)
    assert r.rhs.value == pytest.approx(0.2 * 5.0)
