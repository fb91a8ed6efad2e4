import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contiflow.config_space import Configuration, Torus, min_image_disp
from contiflow.potentials import (GaussianBump, GaussianKernel, HardCoreWell, KawasakiRateParams,
                                  ScaledPotential, SquareWell, UniformBallKernel, ZeroPotential,
                                  check_condition_12, check_low_activity, check_stability, energy,
                                  kawasaki_rate, make_kernel, make_potential, rate_factor,
                                  sample_jump)

T20 = Torus(1, 20.0)


def test_family_values():
    assert float(ZeroPotential()(np.array([0.3]))) == 0.0
    w = SquareWell(1.0, 0.5)
    assert float(w(np.array([0.3]))) == 1.0
    assert float(w(np.array([0.7]))) == 0.0
    assert math.isinf(float(HardCoreWell(0.1)(np.array([0.05]))))
    assert make_potential("square_well", theta="1", R="0.5") == w
    assert make_kernel("gaussian", sigma="2").sigma == 2.0


def test_energy_examples():
    w = SquareWell(1.0, 0.5)
    empty = Configuration(T20, None, interaction_range=0.5)
    assert energy(w, np.array([1.0]), empty) == 0.0
    one = Configuration(T20, [[1.2]], interaction_range=0.5)
    assert energy(w, np.array([1.0]), one) == 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_energy_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    phi = GaussianBump(0.7, 0.3, 1.2)
    g = Configuration(T20, rng.random((50, 1)) * 20, interaction_range=1.2)
    x = rng.random(1) * 20
    brute = float(np.sum(phi(min_image_disp(x[None, :], g.positions, T20))))
    assert energy(phi, x, g) == pytest.approx(brute, rel=1e-12, abs=1e-14)


def test_jump_scaling():
    rng = np.random.default_rng(0)
    x = np.zeros(1)
    t = Torus(1, 1000.0)
    for eps, want in ((1.0, 1.0), (0.5, 2.0)):
        d = np.array([min_image_disp(sample_jump(GaussianKernel(1.0), eps, x, t, rng), x, t)[0]
                      for _ in range(20_000)])
        # SE of a sample std is about sd / sqrt(2 n)
        assert abs(d.std() - want) < 3 * want / math.sqrt(40_000)
    k = UniformBallKernel(1.0)
    d = np.array([min_image_disp(sample_jump(k, 0.25, x, t, rng), x, t)[0] for _ in range(2000)])
    assert np.all(np.abs(d) <= 4.0)


def test_kernel_densities_normalised():
    r = np.linspace(-40, 40, 200_001)
    dr = r[1] - r[0]
    for k in (GaussianKernel(1.3), UniformBallKernel(0.8)):
        for eps in (1.0, 0.25):
            mass = k.scaled_density(r[:, None], eps).sum() * dr
            assert mass == pytest.approx(1.0, abs=2e-3)


def test_stability_checks(rng):
    assert check_stability(SquareWell(1.0, 0.5), 0.0, 50, rng).passed
    rep = check_stability(SquareWell(-0.2, 0.5), 0.0, 50, rng)
    assert not rep.passed and rep.witness is not None
    assert check_stability(HardCoreWell(0.1, 0.3, 0.4), 0.0, 50, rng).passed


def test_low_activity_examples():
    rep0 = check_low_activity(ZeroPotential(), 0.5)
    assert rep0.holds and rep0.lhs == 0.0
    rep = check_low_activity(SquareWell(1.0, 0.5), 0.2)
    assert rep.threshold == pytest.approx(1 / (2 * math.e), rel=1e-12)
    assert rep.lhs == pytest.approx(0.2 * 2 * 0.5 * (1 - math.exp(-1)), rel=1e-9)
    assert rep.holds


def test_condition_12_examples():
    w = SquareWell(1.0, 0.5)
    half = check_condition_12(w, 0.5, 0.5)
    assert half.holds and half.value == 0.0
    assert check_condition_12(w, 0.0, 0.0).holds
    one = check_condition_12(w, 1.0, 1.0)
    assert one.holds and one.value == pytest.approx(math.e - 1, rel=1e-9)
    assert not check_condition_12(HardCoreWell(0.1), 1.0, 0.0).holds


def test_free_and_empty_rates_equal_kernel(rng):
    k = GaussianKernel(1.0)
    free = KawasakiRateParams(ZeroPotential(), ZeroPotential(), k, 0.5)
    g = Configuration(T20, rng.random((30, 1)) * 20, interaction_range=0.5)
    x, y = np.array([3.0]), np.array([4.1])
    a = k.wrapped_density(min_image_disp(y, x, T20)[None, :], 0.5, T20)[0]
    assert kawasaki_rate(free, x, y, g) == pytest.approx(a, rel=1e-12)
    w = SquareWell(1.0, 0.5)
    inter = KawasakiRateParams(w, w, k, 0.5)
    empty = Configuration(T20, None, interaction_range=0.5)
    assert kawasaki_rate(inter, x, y, empty) == pytest.approx(a, rel=1e-12)


def test_plain_rate_formula(rng):
    k = GaussianKernel(1.0)
    pm, pp = SquareWell(0.4, 0.5), SquareWell(0.9, 0.5)
    params = KawasakiRateParams(pm, pp, k, 1.0)
    g = Configuration(T20, [[3.2], [3.4], [5.9]], interaction_range=0.5)
    x, y = np.array([3.0]), np.array([6.0])
    em = energy(pm, x, g)
    ep = energy(pp, y, g)
    assert rate_factor(params, x, y, g) == pytest.approx(math.exp(em - ep), rel=1e-12)


def test_uv_equal_paths_agree(rng):
    w = SquareWell(1.0, 0.5)
    k = GaussianKernel(1.0)
    g = Configuration(T20, rng.random((20, 1)) * 20, interaction_range=0.5)
    for u in (0.0, 0.3, 0.5):
        sym = KawasakiRateParams.symmetric(w, u, u, k, 1.0, z=0.2)
        plain = KawasakiRateParams(_scaled_or_zero(w, u), _scaled_or_zero(w, 1 - u), k, 1.0)
        for _ in range(20):
            x, y = rng.random(1) * 20, rng.random(1) * 20
            assert rate_factor(sym, x, y, g) == pytest.approx(rate_factor(plain, x, y, g),
                                                              rel=1e-12)


def _scaled_or_zero(phi, c):
    return ZeroPotential() if c == 0 else ScaledPotential(phi, c)
