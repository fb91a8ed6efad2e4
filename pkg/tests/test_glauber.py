import math

import numpy as np
import pytest
from scipy import integrate

from contiflow import estimation as est
from contiflow import glauber as gl
from contiflow.config_space import Configuration, StepFunction, Torus, Window, sample_poisson
from contiflow.potentials import energy

T20 = Torus(1, 20.0)
LAMBDA = Window((0.0,), (5.0,))
# distinct constants so that the pairing of C_u / C_v with u / v matters
CU, CV = 0.93, 0.89


def _interacting(well, pairing="cross", u=0.0, v=0.5):
    return gl.GlauberParams.interacting(T20, well, 0.2, u, v, CU, CV, death_pairing=pairing)


@pytest.mark.parametrize("e", [0.0, 1.0, 2.0, 3.0])
def test_detailed_balance_pointwise(test_well, e):
    p = _interacting(test_well)
    d = float(gl.death_rate(p, e))
    b = float(gl.birth_rate(p, e))
    assert 0.2 * math.exp(-e) * d == pytest.approx(b, rel=1e-13)


def test_swapped_pairing_breaks_detailed_balance(test_well):
    p = _interacting(test_well, "same")
    bad = [abs(0.2 * math.exp(-e) * float(gl.death_rate(p, e)) - float(gl.birth_rate(p, e)))
           for e in (1.0, 2.0)]
    assert min(bad) > 1e-4
    # with u = v the two pairings coincide
    q = _interacting(test_well, "same", u=0.3, v=0.3)
    assert 0.2 * math.exp(-1.0) * float(gl.death_rate(q, 1.0)) == pytest.approx(
        float(gl.birth_rate(q, 1.0)), rel=1e-13)


def test_param_validation(test_well):
    with pytest.raises(ValueError):
        gl.GlauberParams.free(T20, 0.0)
    with pytest.raises(ValueError):
        gl.GlauberParams.interacting(T20, test_well, 0.2, 1.5, 0.0, CU, CV)
    with pytest.raises(ValueError):
        gl.GlauberParams.interacting(T20, test_well, 0.2, 0.0, 0.0, -1.0, CV)


def test_free_mean_from_empty():
    p = gl.GlauberParams.free(T20, 0.5)
    rng = np.random.default_rng(1)
    empty = Configuration(T20, None)
    times = [0.5, 1.0, 3.0]
    counts = np.array([[len(s) for s in gl.run(empty, p, 3.0, times, rng)] for _ in range(2000)])
    for j, t in enumerate(times):
        m = est.mean_estimate(counts[:, j])
        assert abs(m.z_against(0.5 * 20 * (1 - math.exp(-t)))) < 3


def test_free_stationary_poisson():
    p = gl.GlauberParams.free(T20, 0.5)
    rng = np.random.default_rng(2)
    counts = []
    for _ in range(2000):
        (s,) = gl.run(sample_poisson(0.5, T20, rng), p, 2.0, [2.0], rng)
        counts.append(s.count_in(LAMBDA))
    assert est.poisson_gof_pvalue(np.array(counts), 2.5) > 0.01


def test_free_exact_sampler_survival_and_limit():
    rng = np.random.default_rng(3)
    g0 = Configuration(T20, np.linspace(0.5, 19.5, 40)[:, None])
    alive = []
    for _ in range(500):
        s0, s1 = gl.free_exact_sampler(g0, 1e-9, 1.0, [0.0, 1.0], rng)
        assert len(s0) == 40
        alive.append(len(s1))
    m = est.mean_estimate(alive)
    assert abs(m.z_against(40 * math.exp(-1))) < 3
    counts = [gl.free_exact_sampler(g0, 0.5, 10.0, [10.0], rng)[0].count_in(LAMBDA)
              for _ in range(3000)]
    # the initial points survive with probability e^{-10}: limit law is Poisson(k1)
    assert est.poisson_gof_pvalue(np.array(counts), 2.5) > 0.01


def test_L0_trivial_and_free_closed_forms():
    p = gl.GlauberParams.free(T20, 0.7)
    zero = StepFunction(LAMBDA, 0.0)
    g = sample_poisson(0.5, T20, np.random.default_rng(4))
    assert gl.apply_L0_to_exp(zero, g, p) == pytest.approx(0.0, abs=1e-14)
    f = StepFunction(LAMBDA, -1.0)
    empty = Configuration(T20, None)
    assert gl.apply_L0_to_exp(f, empty, p) == pytest.approx(0.7 * 5 * (math.exp(-1) - 1), rel=1e-12)
    one = Configuration(T20, [[2.0]])
    c = 20.0
    want = math.exp(-c) * ((math.exp(c) - 1) + 0.7 * 5 * (math.exp(-c) - 1))
    assert gl.apply_L0_to_exp(StepFunction(LAMBDA, -c), one, p) == pytest.approx(want, abs=1e-8)
    with pytest.raises(ValueError):
        gl.apply_L0_to_exp(StepFunction(LAMBDA, 0.5), empty, p)


def test_L0_interacting_matches_scipy_oracle(test_well):
    p = _interacting(test_well)
    g = Configuration(T20, [[1.0], [1.3], [4.8], [12.0]], interaction_range=0.5)
    f = StepFunction(LAMBDA, -0.6)
    pts = g.positions
    fx = f(pts)
    death = 0.0
    for i, pid in enumerate(g.ids):
        e = energy(test_well, pts[i], g, exclude=int(pid))
        death += float(gl.death_rate(p, e)) * math.expm1(-fx[i])

    def birth(y):
        return float(gl.birth_rate(p, energy(test_well, np.array([y]), g))) * math.expm1(-0.6)

    brk = sorted(b for x in pts[:, 0] for b in (x - 0.5, x + 0.5) if 0 < b < 5)
    integral = integrate.quad(birth, 0.0, 5.0, points=brk, limit=200, epsabs=1e-13)[0]
    want = math.exp(float(fx.sum())) * (death + integral)
    assert gl.apply_L0_to_exp(f, g, p) == pytest.approx(want, rel=1e-9)


def test_flux_balance_in_equilibrium(small_bank, test_well):
    p = _interacting(test_well)
    rng = np.random.default_rng(6)
    births, deaths = [], []
    for g in small_bank[:400]:
        out = []
        gl.run(g, p, 2.0, [], rng, state_out=out, flux_window=LAMBDA)
        births.append(out[0].births_in_window)
        deaths.append(out[0].deaths_in_window)
    diff = est.mean_estimate(np.array(births) - np.array(deaths))
    assert abs(diff.z_against(0.0)) < 3
    assert np.mean(births) > 0.5
