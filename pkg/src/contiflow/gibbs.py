"""Grand-canonical Gibbs sampling on the torus by a birth-death chain, and
Georgii-Nguyen-Zessin (GNZ) residuals for checking the samples.

The chain has birth rate ``z exp(-E(y, gamma))`` per unit volume and death
rate 1 per particle; this pair is reversible with respect to the Gibbs
measure with activity ``z``. Births are simulated by thinning a
space-time Poisson proposal stream of intensity ``z M`` where ``M`` bounds
``exp(-E)`` (``M = 1`` for non-negative potentials).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .config_space import Configuration, Torus, Window, sample_poisson
from .estimation import EstimateWithError, EstimationError, mean_estimate
from .potentials import (ConfigurationError, PairPotential, check_low_activity, energy)

__all__ = ["GibbsParams", "sample_gibbs", "gnz_residual", "GNZResult", "GibbsChain",
           "LowActivityWarning"]


class LowActivityWarning(UserWarning):
    """Parameters lie outside the low-activity, high-temperature regime."""


@dataclass
class GibbsParams:
    """Sampler settings. ``burn_in`` and ``thinning`` count events.

    The event counts are converted to continuous time through the reference
    event rate ``2 z L^d`` (births plus deaths at density ``z``); snapshots are
    taken at fixed times because the configuration seen at event epochs is
    biased towards states with large total rate.
    """

    phi: PairPotential
    z: float
    torus: Torus
    burn_in: int | None = None
    thinning: int | None = None
    check: bool = True

    def __post_init__(self):
        if not self.z > 0:
            raise ValueError("activity z must be positive")
        zV = math.ceil(self.z * self.torus.volume)
        if self.burn_in is None:
            self.burn_in = 50 * zV
        if self.thinning is None:
            self.thinning = 10 * zV
        if self.burn_in < 0 or self.thinning < 1:
            raise ValueError("burn_in must be >= 0 and thinning >= 1")
        if not self.phi.is_zero:
            self.torus.check_range(self.phi.range)
        if self.phi.landing_bound(self.torus.dim) is None:
            raise ConfigurationError("no acceptance bound for births: potential has a "
                                     "negative part but no hard core")
        if self.check and not self.phi.is_zero:
            rep = check_low_activity(self.phi, self.z, dim=self.torus.dim)
            if not rep.holds:
                warnings.warn(f"low-activity condition fails: {rep.lhs:.4g} >= {rep.threshold:.4g}",
                              LowActivityWarning, stacklevel=2)

    @property
    def reference_rate(self) -> float:
        return 2.0 * self.z * self.torus.volume

    @property
    def burn_in_time(self) -> float:
        return self.burn_in / self.reference_rate

    @property
    def thinning_time(self) -> float:
        return self.thinning / self.reference_rate


class GibbsChain:
    """Continuous-time birth-death chain with the Gibbs measure as reversible law."""

    def __init__(self, params: GibbsParams, rng, gamma0: Configuration | None = None):
        self.params = params
        self.rng = rng
        t = params.torus
        rng_range = params.phi.range if params.phi.range > 0 else None
        if gamma0 is None:
            gamma0 = sample_poisson(params.z, t, rng, interaction_range=rng_range)
        self.gamma = gamma0
        self.time = 0.0
        self.M = params.phi.landing_bound(t.dim)
        self.birth_rate = params.z * t.volume * self.M
        self.n_events = 0
        self.n_births = 0
        self.n_deaths = 0

    def advance_to(self, t_end: float) -> None:
        """Run the chain forward to time ``t_end``."""
        rng, g, phi, t = self.rng, self.gamma, self.params.phi, self.params.torus
        free = phi.is_zero
        M = self.M
        while True:
            n = len(g)
            total = self.birth_rate + n
            dt = rng.exponential(1.0 / total)
            if self.time + dt > t_end:
                # memoryless clocks: discard the overshooting event
                self.time = t_end
                return
            self.time += dt
            if rng.random() * total < self.birth_rate:
                y = rng.random(t.dim) * t.side
                if not free:
                    e = energy(phi, y, g)
                    if rng.random() * M >= math.exp(-e):
                        continue
                g.insert(y)
                self.n_births += 1
            else:
                ids = g.ids
                g.remove(int(ids[rng.integers(n)]))
                self.n_deaths += 1
            self.n_events += 1


def sample_gibbs(params: GibbsParams, n_samples: int, rng, n_chains: int = 1,
                 gamma0: Configuration | None = None) -> list:
    """Draw ``n_samples`` snapshots, split evenly across ``n_chains`` chains.

    Each chain burns in for ``params.burn_in_time`` and then records a copy
    of its state every ``params.thinning_time``. Chains use independent
    child streams of ``rng``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    streams = [rng] if n_chains == 1 else rng.spawn(n_chains)
    per_chain = [n_samples // n_chains + (i < n_samples % n_chains) for i in range(n_chains)]
    out = []
    for s, m in zip(streams, per_chain):
        chain = GibbsChain(params, s, None if gamma0 is None else gamma0.copy())
        t = params.burn_in_time
        for _ in range(m):
            chain.advance_to(t)
            out.append(chain.gamma.copy())
            t += params.thinning_time
    return out


@dataclass
class GNZResult:
    lhs: EstimateWithError
    rhs: EstimateWithError
    z_score: float
    degenerate: bool = False


def gnz_residual(samples, phi: PairPotential, z: float, h, window: Window,
                 n_mc: int = 16, rng=None) -> GNZResult:
    """Both sides of ``E sum_{x in gamma} h(x, gamma - x) = z int E[e^{-E(x, gamma)} h(x, gamma)] dx``.

    ``h(x, gamma, exclude)`` evaluates the test function at point ``x``
    against ``gamma`` with id ``exclude`` removed (``None`` when ``x`` is not in
    ``gamma``). ``h`` must vanish for ``x`` outside ``window``; the right side
    integrates over ``window`` with ``n_mc`` uniform points per sample. The
    z-score uses per-sample differences of the two sides.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if len(samples) < 2:
        raise EstimationError("need at least two samples")
    V = window.volume
    lhs, rhs = [], []
    for g in samples:
        s = 0.0
        for pid in g:
            x = g.position(pid)
            if window.contains(x)[0]:
                s += h(x, g, pid)
        lhs.append(s)
        xs = window.uniform(rng, n_mc)
        acc = 0.0
        for x in xs:
            w = math.exp(-energy(phi, x, g)) if not phi.is_zero else 1.0
            if w > 0:
                acc += w * h(x, g, None)
        rhs.append(z * V * acc / n_mc)
    lhs, rhs = np.array(lhs), np.array(rhs)
    diff = mean_estimate(lhs - rhs)
    degenerate = diff.se == 0.0
    zs = 0.0 if degenerate and diff.value == 0 else diff.z_against(0.0)
    return GNZResult(mean_estimate(lhs), mean_estimate(rhs), float(zs), degenerate)
