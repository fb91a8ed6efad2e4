"""Spatial birth-and-death dynamics: the free immigration-death process and
the interacting equilibrium birth-death process with constants ``C_u, C_v``.

Interacting rates (``E`` the relative energy of the base potential):

* death of ``x``: ``(C_v e^{u E(x, gamma - x)} + C_u e^{v E(x, gamma - x)}) / 2``
* birth at ``y``: ``z (C_u e^{-(1-v) E(y, gamma)} + C_v e^{-(1-u) E(y, gamma)}) / 2``

so that ``z e^{-E(y, gamma)} d(y, gamma) = b(y, gamma)`` and the Gibbs measure
is reversible. Deaths are simulated exactly from cached per-particle rates;
births by thinning a uniform proposal stream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._quad import composite_nodes
from .config_space import Configuration, Torus, Window, min_image_disp, wrap
from .potentials import ConfigurationError, ConsistencyError, PairPotential, energies_at, energy

__all__ = ["GlauberParams", "GlauberState", "run", "free_exact_sampler", "apply_L0_to_exp",
           "death_rate", "birth_rate"]


def _times(c, e):
    """``c * e`` with ``0 * inf = 0``, vectorised."""
    e = np.asarray(e, dtype=float)
    if c == 0:
        return np.zeros(e.shape)
    return c * e


@dataclass(frozen=True)
class GlauberParams:
    """``mode="free"`` needs ``k1``; ``mode="interacting"`` needs ``phi, z, u, v, C_u, C_v``."""

    torus: Torus
    mode: str = "free"
    k1: float | None = None
    phi: PairPotential | None = None
    z: float | None = None
    u: float = 0.0
    v: float = 0.0
    C_u: float | None = None
    C_v: float | None = None
    death_pairing: str = "cross"

    def __post_init__(self):
        if self.death_pairing not in ("cross", "same"):
            raise ValueError("death_pairing must be 'cross' or 'same'")
        if self.mode == "free":
            if self.k1 is None or not self.k1 > 0:
                raise ValueError("free mode needs k1 > 0")
        elif self.mode == "interacting":
            if self.phi is None or self.z is None or not self.z > 0:
                raise ValueError("interacting mode needs phi and z > 0")
            if not (0 <= self.u <= 1 and 0 <= self.v <= 1):
                raise ValueError("u, v must lie in [0, 1]")
            if self.C_u is None or self.C_v is None or self.C_u <= 0 or self.C_v <= 0:
                raise ValueError("interacting mode needs positive constants C_u, C_v")
            if not self.phi.is_zero:
                self.torus.check_range(self.phi.range)
            if self.phi.landing_bound(self.torus.dim) is None:
                raise ConfigurationError("birth factor has no bound: potential has a negative "
                                         "part but no hard core")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def free(cls, torus: Torus, k1: float) -> "GlauberParams":
        return cls(torus, "free", k1=k1)

    @classmethod
    def interacting(cls, torus, phi, z, u, v, C_u, C_v, death_pairing="cross") -> "GlauberParams":
        """``death_pairing="same"`` pairs ``C_u`` with ``e^{uE}`` in the death rate.

        That variant is not reversible for ``u != v`` and ``C_u != C_v``; it exists
        as a negative control for stationarity tests.
        """
        return cls(torus, "interacting", phi=phi, z=z, u=u, v=v, C_u=C_u, C_v=C_v,
                   death_pairing=death_pairing)

    @property
    def birth_bound(self) -> float:
        """Dominating birth intensity per unit volume."""
        if self.mode == "free":
            return self.k1
        M = self.phi.landing_bound(self.torus.dim)
        return self.z * 0.5 * (self.C_u + self.C_v) * M


def death_rate(params: GlauberParams, e):
    """Death rate given the energy ``E(x, gamma - x)`` (vectorised)."""
    if params.mode == "free":
        return np.ones(np.shape(e))
    e = np.asarray(e, dtype=float)
    if np.any(np.isinf(e)):
        raise ConsistencyError("infinite energy at an existing particle")
    cu, cv = params.C_u, params.C_v
    if params.death_pairing == "same":
        cu, cv = cv, cu
    return 0.5 * (cv * np.exp(params.u * e) + cu * np.exp(params.v * e))


def birth_rate(params: GlauberParams, e):
    """Birth intensity at a site with energy ``E(y, gamma)`` (vectorised)."""
    if params.mode == "free":
        return np.full(np.shape(e), params.k1)
    with np.errstate(over="ignore", invalid="ignore"):
        a = params.C_u * np.exp(-_times(1 - params.v, e))
        b = params.C_v * np.exp(-_times(1 - params.u, e))
    return params.z * 0.5 * (a + b)


@dataclass
class GlauberState:
    """Configuration, clock, cached death rates and flux counters."""

    gamma: Configuration
    params: GlauberParams
    t: float = 0.0
    flux_window: Window | None = None
    deaths: dict = field(default_factory=dict)
    n_births: int = 0
    n_deaths: int = 0
    n_proposals: int = 0
    births_in_window: int = 0
    deaths_in_window: int = 0

    def __post_init__(self):
        p = self.params
        if p.mode == "interacting" and not p.phi.is_zero:
            if self.gamma.interaction_range < p.phi.range:
                self.gamma = Configuration(self.gamma.torus, self.gamma.positions,
                                           interaction_range=p.phi.range)
        self.free = p.mode == "free" or p.phi.is_zero
        self.unit_deaths = p.mode == "free"
        self.B = p.birth_bound * p.torus.volume
        self.refresh()

    def _death_of(self, pid):
        if self.free:
            return float(death_rate(self.params, 0.0))
        x = self.gamma.position(pid)
        return float(death_rate(self.params, energy(self.params.phi, x, self.gamma, exclude=pid)))

    def refresh(self):
        self.deaths = {pid: self._death_of(pid) for pid in self.gamma}

    def _update_near(self, x):
        if self.free:
            return
        for q in self.gamma.neighbors_within(x, self.params.phi.range).tolist():
            self.deaths[q] = self._death_of(q)

    def _in_window(self, x):
        return self.flux_window is not None and bool(self.flux_window.contains(x)[0])

    def advance(self, t_end: float, rng) -> None:
        p, g = self.params, self.gamma
        torus = p.torus
        while True:
            D = float(len(g)) if self.unit_deaths else float(sum(self.deaths.values()))
            total = self.B + D
            dt = rng.exponential(1.0 / total)
            if self.t + dt > t_end:
                self.t = t_end
                return
            self.t += dt
            r = rng.random() * total
            if r < self.B:
                self.n_proposals += 1
                y = rng.random(torus.dim) * torus.side
                if not self.free:
                    e = energy(p.phi, y, g)
                    acc = float(birth_rate(p, e)) / p.birth_bound
                    if rng.random() >= acc:
                        continue
                pid = g.insert(y)
                self.deaths[pid] = self._death_of(pid)
                self._update_near(y)
                self.n_births += 1
                self.births_in_window += self._in_window(y)
            else:
                ids = list(self.deaths)
                if self.unit_deaths:
                    pid = ids[int(rng.integers(len(ids)))]
                else:
                    w = np.cumsum(np.fromiter(self.deaths.values(), float, len(ids)))
                    pid = ids[min(int(np.searchsorted(w, (r - self.B), side="right")), len(ids) - 1)]
                x = g.remove(pid)
                del self.deaths[pid]
                self._update_near(x)
                self.n_deaths += 1
                self.deaths_in_window += self._in_window(x)


def run(gamma0: Configuration, params: GlauberParams, T: float, snap_times, rng,
        state_out: list | None = None, flux_window: Window | None = None) -> list:
    """Event-loop trajectory on ``[0, T]``; returns copies at ``snap_times``.

    If ``state_out`` is a list, the final :class:`GlauberState` (with birth and
    death counters, optionally restricted to ``flux_window``) is appended.
    """
    snap_times = np.sort(np.asarray(list(snap_times), dtype=float))
    if snap_times.size and (snap_times[0] < 0 or snap_times[-1] > T):
        raise ValueError("snapshot times must lie in [0, T]")
    s = GlauberState(gamma0.copy(), params, flux_window=flux_window)
    snaps = []
    for ts in snap_times:
        s.advance(ts, rng)
        snaps.append(s.gamma.copy())
    s.advance(T, rng)
    if state_out is not None:
        state_out.append(s)
    return snaps


def free_exact_sampler(mu0_sampler, k1: float, T: float, snap_times, rng,
                       torus: Torus | None = None) -> list:
    """Immigration-death process built directly from exponential lifetimes.

    ``mu0_sampler`` is a callable ``rng -> Configuration`` or a fixed
    :class:`Configuration`. Each initial point gets one Exp(1) lifetime; new
    points form a Poisson process of intensity ``k1`` on torus x (0, T], each
    with its own Exp(1) lifetime. Snapshots keep exactly the points alive at
    each time, so multi-time statistics are coupled correctly.
    """
    gamma0 = mu0_sampler(rng) if callable(mu0_sampler) else mu0_sampler
    torus = torus or gamma0.torus
    p0 = gamma0.positions
    life0 = rng.exponential(1.0, size=len(p0))
    nb = rng.poisson(k1 * torus.volume * T)
    pb = rng.random((nb, torus.dim)) * torus.side
    tb = rng.random(nb) * T
    lifeb = rng.exponential(1.0, size=nb)
    snaps = []
    for s in np.asarray(list(snap_times), dtype=float):
        if s < 0 or s > T:
            raise ValueError("snapshot times must lie in [0, T]")
        keep0 = life0 > s
        keepb = (tb <= s) & (tb + lifeb > s)
        pts = np.vstack([p0[keep0], pb[keepb]])
        snaps.append(Configuration(torus, pts, interaction_range=gamma0.interaction_range))
    return snaps


def _birth_nodes(f, torus: Torus, others: np.ndarray, phi):
    """Quadrature nodes on ``supp f`` split at potential discontinuities."""
    win = f.window
    if torus.dim == 1:
        lo, hi = win.lo[0], win.hi[0]
        bps = []
        if phi is not None and not phi.is_zero and len(others):
            L = torus.side
            for b in phi.breakpoints():
                for c in (others[:, 0] - b, others[:, 0] + b):
                    for k in (-1, 0, 1):
                        bps.extend((c + k * L).tolist())
        nodes, w = composite_nodes(lo, hi, bps, max_len=(hi - lo) / 8, order=16)
        return nodes[:, None], w
    # tensor product Gauss-Legendre over the window (smooth parts only)
    axes = [composite_nodes(a, b, (), max_len=(b - a) / 8, order=8) for a, b in zip(win.lo, win.hi)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrid = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    nodes = np.stack([gr.ravel() for gr in grids], axis=1)
    w = np.prod(np.stack([wg.ravel() for wg in wgrid], axis=1), axis=1)
    return nodes, w


def apply_L0_to_exp(f, gamma: Configuration, params: GlauberParams) -> float:
    """``(L_0 e^{<f, .>})(gamma)`` for a non-positive step function ``f``.

    ``e^{<f, gamma>} [sum_x d(x, gamma - x)(e^{-f(x)} - 1) + int b(y, gamma)(e^{f(y)} - 1) dy]``;
    the birth integral runs over the support window of ``f`` only.
    """
    if getattr(f, "max_value", 0.0) > 0:
        raise ValueError("test function must be non-positive")
    torus = params.torus
    pts = gamma.positions
    fx = np.asarray(f(pts), dtype=float) if len(pts) else np.zeros(0)
    F = math.exp(float(fx.sum()))
    phi = params.phi if params.mode == "interacting" else None
    if len(pts) and phi is not None and not phi.is_zero:
        e_dep = np.array([np.sum(phi(min_image_disp(pts[i][None, :], np.delete(pts, i, 0), torus)))
                          if len(pts) > 1 else 0.0 for i in range(len(pts))])
    else:
        e_dep = np.zeros(len(pts))
    death = float(np.sum(death_rate(params, e_dep) * np.expm1(-fx))) if len(pts) else 0.0
    if not hasattr(f, "window"):
        raise TypeError("birth quadrature needs a step function with a support window")
    ys, w = _birth_nodes(f, torus, pts, phi)
    ys = wrap(ys, torus)
    if phi is not None and not phi.is_zero:
        e_land = energies_at(phi, ys, pts, torus)
    else:
        e_land = np.zeros(len(ys))
    birth = float(np.dot(w, birth_rate(params, e_land) * np.expm1(np.asarray(f(ys), float))))
    return F * (death + birth)
