import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contiflow import harmonic as hm
from contiflow.config_space import StepFunction, Torus, Window, sample_poisson
from contiflow.potentials import (GaussianKernel, HardCoreWell, KawasakiRateParams, SquareWell,
                                  ZeroPotential)

# closed forms for the test potential theta = 1, R = 0.5, z = 0.2 in d = 1
C_MINUS = math.exp(0.2 * 2 * 0.5 * (math.exp(-1) - 1))
C_PLUS = 0.2 * math.exp(0.2 * 2 * 0.5 * (math.e - 1))


def test_bell_numbers():
    assert [hm.bell_number(n) for n in range(8)] == [1, 1, 2, 5, 15, 52, 203, 877]
    assert len(hm.PartitionSet(5)) == 52
    assert sum(1 for _ in hm.PartitionSet(6)) == 203
    assert hm.bell_number(12) == 4213597


def test_k_transform_examples():
    pts = np.array([[0.3], [1.7]])
    assert hm.k_transform(lambda eta: 1.0 if len(eta) == 0 else 0.0, pts) == 1.0
    f = lambda x: np.array(x)[:, 0] * 2.0  # noqa: E731
    want = (1 + f(pts[:1])[0]) * (1 + f(pts[1:])[0])
    assert hm.k_transform(lambda eta: hm.e_lambda(f, eta), pts) == pytest.approx(want)


def test_e_lambda_examples():
    assert hm.e_lambda(lambda x: np.zeros(len(x)), np.zeros((0, 1))) == 1.0
    pts = np.random.default_rng(0).random((3, 1))
    assert hm.e_lambda(lambda x: np.ones(len(x)), pts) == 1.0
    assert hm.e_lambda(lambda x: np.zeros(len(x)), pts) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 6), st.integers(0, 2**31 - 1))
def test_k_transform_of_exponential_product(n, seed):
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 1)) * 4
    a = rng.normal()
    phi = lambda x: np.cos(a * x[:, 0])  # noqa: E731
    lhs = hm.k_transform(lambda eta: hm.e_lambda(lambda x: np.expm1(phi(x)), eta), pts)
    rhs = math.exp(float(phi(pts).sum())) if n else 1.0
    assert lhs == pytest.approx(rhs, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_zeta_table_matches_subset_sums(n, seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=1 << n)
    fast = hm.k_transform_table(G)
    for S in range(1 << n):
        brute = sum(G[T] for T in range(1 << n) if T & S == T)
        assert fast[S] == pytest.approx(brute, abs=1e-12)


def test_ursell_n2_and_n3():
    k = np.array([1.0, 0.5, 0.7, 0.6])
    u = hm.correlation_to_ursell(k)
    assert u[3] == pytest.approx(0.6 - 0.5 * 0.7)
    u3 = np.array([0.0, 0.2, 0.3, 0.05, 0.4, -0.02, 0.07, 0.01])
    k3 = hm.ursell_to_correlation(u3)
    # five partitions of {0, 1, 2}
    want = (u3[7] + u3[3] * u3[4] + u3[5] * u3[2] + u3[6] * u3[1] + u3[1] * u3[2] * u3[4])
    assert k3[7] == pytest.approx(want)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_ursell_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(scale=0.5, size=1 << n)
    u[0] = 0.0
    k = hm.ursell_to_correlation(u)
    assert np.allclose(hm.correlation_to_ursell(k), u, atol=1e-10)


@pytest.mark.parametrize("z", [0.1, 1.0, 3.0])
def test_poisson_ursell_vanishes(z):
    pts = np.random.default_rng(1).random((6, 1))
    u = hm.correlation_to_ursell(hm.correlation_table(hm.PoissonCorrelation(z), pts))
    sizes = np.array([bin(S).count("1") for S in range(64)])
    assert np.allclose(u[sizes == 1], z, atol=1e-12)
    assert np.max(np.abs(u[sizes >= 2])) < 1e-10


def test_correlation_requires_unit_empty_value():
    with pytest.raises(hm.CorrelationSpecError):
        hm.correlation_to_ursell(np.array([2.0, 1.0]))


def test_lp_integral_product():
    assert hm.lp_integral_product(lambda x: np.zeros(len(x)), Torus(1, 5.0)) == 1.0
    f = StepFunction(Window((0.0,), (2.0,)), -0.7)
    assert hm.lp_integral_product(f, Window((-1.0,), (3.0,))) == pytest.approx(math.exp(-1.4))


def test_lp_integral_series_oracle():
    # sum_n (1/n!) int f^{(x) n} by Monte Carlo of each n-fold integral
    rng = np.random.default_rng(5)
    c, w = 0.3, 1.5
    total, var = 1.0, 0.0
    for n in range(1, 7):
        pts = rng.random((20_000, n)) * w
        vals = np.prod(-c * np.ones_like(pts), axis=1) * w ** n / math.factorial(n)
        total += vals.mean()
        var += vals.var() / len(vals)
    exact = hm.lp_integral_product(StepFunction(Window((0.0,), (w,)), -c), Window((0.0,), (w,)))
    assert abs(total - exact) < 3 * math.sqrt(var) + 1e-6


def test_c_constants_closed_forms():
    k = hm.PoissonCorrelation(0.2)
    w = SquareWell(1.0, 0.5)
    assert hm.c_minus(k, ZeroPotential()) == 1.0
    assert hm.c_plus(k, ZeroPotential()) == pytest.approx(0.2)
    assert hm.c_minus(k, w) == pytest.approx(C_MINUS, rel=1e-10)
    assert hm.c_plus(k, w) == pytest.approx(C_PLUS, rel=1e-10)
    with pytest.raises(Exception):
        hm.c_plus(k, HardCoreWell(0.1))


def test_estimate_C_u_trivial_cases(small_bank, test_well):
    for e in (hm.estimate_C_u(small_bank, ZeroPotential(), 0.0),
              hm.estimate_C_u(small_bank, test_well, 1.0)):
        assert e.value == 1.0 and e.se == 0.0


def test_C_u_identity_on_gibbs_samples(small_bank, test_well):
    f = StepFunction(Window((0.0,), (5.0,)), 1.0)
    rng = np.random.default_rng(8)
    for u in (0.0, 0.5):
        chk = hm.cu_identity_check(small_bank, test_well, 0.2, u, f, 5.0, n_origins=8, rng=rng)
        assert abs(chk.z_score) < 3


def test_boltzmann_weighted_sum_poisson_campbell():
    t = Torus(1, 20.0)
    rng = np.random.default_rng(2)
    samples = [sample_poisson(0.5, t, rng) for _ in range(3000)]
    f = StepFunction(Window((0.0,), (4.0,)), 1.0)
    e = hm.lemma1_lhs(samples, ZeroPotential(), 0.3, f)
    assert abs(e.z_against(0.5 * 4.0)) < 3


def test_dual_generators_free_case():
    k = hm.PoissonCorrelation(0.7)
    free = KawasakiRateParams(ZeroPotential(), ZeroPotential(), GaussianKernel(1.0), 0.5)
    eta = np.array([[0.0], [1.3]])
    m = hm.hat_L_star_minus_eps(k, eta, free, mc_n=200, rng=np.random.default_rng(0))
    assert m.value == pytest.approx(-2 * 0.7 ** 2) and m.se == pytest.approx(0.0, abs=1e-15)
    assert hm.hat_L0_star_minus(k, eta, free) == pytest.approx(-2 * 0.7 ** 2)
    one = np.zeros((1, 1))
    p = hm.hat_L_star_plus_eps(k, one, free, mc_n=200, rng=np.random.default_rng(0))
    assert p.value / hm.hat_L0_star_plus(k, one, free) == pytest.approx(0.7)


def test_dual_generator_ratio_matches_quadrature(test_well, gauss):
    k = hm.PoissonCorrelation(0.2)
    params = KawasakiRateParams(test_well, test_well, gauss, 0.5)
    one = np.zeros((1, 1))
    rng = np.random.default_rng(11)
    for sign, fn, l0 in (("minus", hm.hat_L_star_minus_eps, hm.hat_L0_star_minus),
                         ("plus", hm.hat_L_star_plus_eps, hm.hat_L0_star_plus)):
        e = fn(k, one, params, mc_n=4000, rng=rng)
        ratio = e.value / l0(k, one, params)
        se = e.se / abs(l0(k, one, params))
        assert abs(ratio - hm.single_point_ratio_quad(k, params, sign)) < 3 * se


def test_small_eps_ratio_approaches_constants(test_well, gauss):
    k = hm.PoissonCorrelation(0.2)
    p = KawasakiRateParams(test_well, test_well, gauss, 1.0 / 64)
    assert hm.single_point_ratio_quad(k, p, "minus") == pytest.approx(C_MINUS, abs=3e-3)
    assert hm.single_point_ratio_quad(k, p, "plus") == pytest.approx(C_PLUS, abs=3e-3)


def test_limit_forms_detailed_balance_relation(test_well, gauss):
    # at a single point with phi- = phi+: -L0^- k / (c^- z) equals L0^+ k / c^+ up to z factors
    k = hm.PoissonCorrelation(0.2)
    p = KawasakiRateParams(test_well, test_well, gauss, 1.0)
    one = np.zeros((1, 1))
    m, pl = hm.hat_L0_star_minus(k, one, p), hm.hat_L0_star_plus(k, one, p)
    assert -m * C_MINUS == pytest.approx(pl * C_PLUS, rel=1e-10)


def test_two_center_integral_far_apart(test_well):
    # separated centres: the two Mayer integrals add
    far = hm.two_center_integral(test_well, test_well, [5.0])
    want = 2 * 0.5 * (math.e - 1) + 2 * 0.5 * (math.exp(-1) - 1)
    assert far == pytest.approx(want, rel=1e-10)
    assert hm.two_center_integral(test_well, test_well, [0.0]) == pytest.approx(0.0, abs=1e-12)


def test_decay_probe_poisson_is_zero():
    spec = hm.PoissonCorrelation(0.5)
    probe = hm.decay_probe(spec, np.array([[0.0], [0.4], [1.0]]))
    assert np.max(np.abs(probe)) < 1e-12


def test_tabulated_spec_bound_check():
    spec = hm.TabulatedCorrelation({1: lambda p: 0.3, 2: lambda p: 0.09 * (1 - math.exp(
        -abs(p[0, 0] - p[1, 0])))}, s=0.0, C=0.3)
    assert spec.check_bound(np.random.default_rng(0))
    u = hm.correlation_to_ursell(hm.correlation_table(spec, np.array([[0.0], [0.5]])))
    assert u[3] == pytest.approx(0.09 * (1 - math.exp(-0.5)) - 0.09)


def test_sizes_are_limited():
    with pytest.raises(hm.SizeError):
        hm.subset_table(lambda eta: 1.0, np.zeros((13, 1)))
    assert list(itertools.islice(hm.set_partitions([0]), 5)) == [[(0,)]]
