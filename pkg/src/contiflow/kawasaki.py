"""Continuous-time hopping (Kawasaki) dynamics on the torus.

A particle at ``x`` jumps to ``y`` at rate density
``a_eps(x - y) exp[E^-(x, gamma - x) - E^+(y, gamma - x)]``
(or the half-sum form of the symmetric ``(u, v)`` family). Trajectories are
sampled exactly by thinning: particle ``x`` carries the dominating intensity
``Lambda_x = (departure factor) * M_land``, a proposal ``y ~ a_eps(x - .)`` is
drawn and accepted with probability ``rate / (a_eps * Lambda_x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._quad import composite_nodes
from .config_space import Configuration, min_image_disp, wrap
from .estimation import EstimateWithError, mean_estimate
from .potentials import (ConsistencyError, KawasakiRateParams, _exp_combination,
                         energies_at, energy, landing_bound_for)

__all__ = ["KawasakiState", "step", "run", "apply_Leps_to_exp", "departure_factor",
           "free_covariance_torus"]


def _dep_potential(params):
    return params.uv.phi if params.uv is not None else params.phi_minus


def _land_potential(params):
    return params.uv.phi if params.uv is not None else params.phi_plus


def departure_factor(params: KawasakiRateParams, e_from: float) -> float:
    """Sup over landing energies of the rate factor, divided by ``M_land``."""
    if math.isinf(e_from):
        raise ConsistencyError("departure energy is infinite: overlapping hard cores")
    if params.uv is None:
        return math.exp(e_from)
    u, v = params.uv.u, params.uv.v
    return 0.5 * (math.exp(u * e_from) + math.exp(v * e_from))


@dataclass
class KawasakiState:
    """Configuration, clock and cached dominating intensities of a hopping run."""

    gamma: Configuration
    params: KawasakiRateParams
    t: float = 0.0
    event_log: list | None = None
    audit_every: int = 1000
    lam: dict = field(default_factory=dict)
    n_proposals: int = 0
    n_jumps: int = 0

    def __post_init__(self):
        p = self.params
        dim = self.gamma.torus.dim
        self.M = landing_bound_for(p, dim)
        self.free = p.is_free
        self.static = self.free or _dep_potential(p).is_zero
        if not self.free:
            self.gamma.torus.check_range(p.interaction_range)
            if self.gamma.interaction_range < p.interaction_range:
                self.gamma = Configuration(self.gamma.torus, self.gamma.positions,
                                           interaction_range=p.interaction_range)
        self.refresh()

    def _lam_of(self, pid) -> float:
        if self.static:
            return self.M
        x = self.gamma.position(pid)
        e = energy(_dep_potential(self.params), x, self.gamma, exclude=pid)
        return departure_factor(self.params, e) * self.M

    def refresh(self) -> None:
        self.lam = {pid: self._lam_of(pid) for pid in self.gamma}

    def audit(self) -> None:
        """Compare cached intensities with a full recomputation."""
        for pid, v in self.lam.items():
            w = self._lam_of(pid)
            if not math.isclose(v, w, rel_tol=1e-9, abs_tol=1e-12):
                raise ConsistencyError(f"cached intensity {v} != recomputed {w} for id {pid}")

    @property
    def total_rate(self) -> float:
        return float(sum(self.lam.values()))

    def _pick(self, rng):
        ids = list(self.lam)
        if self.static:
            return ids[int(rng.integers(len(ids)))]
        w = np.fromiter(self.lam.values(), dtype=float, count=len(ids))
        c = np.cumsum(w)
        return ids[int(np.searchsorted(c, rng.random() * c[-1], side="right"))]

    def _try_jump(self, rng) -> bool:
        """One proposal; applies the jump and returns True on acceptance."""
        p, g = self.params, self.gamma
        pid = self._pick(rng)
        x = g.position(pid).copy()
        y = wrap(x + p.kernel.sample(rng, g.torus.dim) / p.eps, g.torus)
        self.n_proposals += 1
        if not self.free:
            e_from = (energy(_dep_potential(p), x, g, exclude=pid)
                      if not _dep_potential(p).is_zero else 0.0)
            e_to = energy(_land_potential(p), y, g, exclude=pid)
            acc = float(_exp_combination(p, e_from, e_to)) / (departure_factor(p, e_from) * self.M)
            if acc > 1 + 1e-12:
                raise ConsistencyError(f"acceptance {acc} > 1: dominating bound violated")
            if rng.random() >= acc:
                return False
        g.move(pid, y)
        self.n_jumps += 1
        if self.event_log is not None:
            self.event_log.append((self.t, pid, x, y.copy()))
        if not self.static:
            r = p.interaction_range
            touched = set(g.neighbors_within(x, r).tolist()) | set(g.neighbors_within(y, r).tolist())
            touched.add(pid)
            for q in touched:
                self.lam[q] = self._lam_of(q)
            if self.audit_every and self.n_jumps % self.audit_every == 0:
                self.audit()
        return True


def step(s: KawasakiState, rng) -> KawasakiState:
    """Advance to the next accepted jump (rejected proposals only consume time)."""
    if len(s.gamma) == 0:
        raise ValueError("no particles to move")
    while True:
        s.t += rng.exponential(1.0 / s.total_rate)
        if s._try_jump(rng):
            return s


def _run_free(gamma0: Configuration, params, T, snap_times, rng, log):
    """Independent walkers: the superposed rate-``n`` clock is drawn in one batch.

    Given ``n`` particles, the events on ``[0, T]`` are a Poisson(``n T``)
    number of uniform times, each moving a uniformly chosen particle by an
    independent kernel step. This is the same law as the event loop.
    """
    torus = gamma0.torus
    ids = gamma0.ids
    pos0 = gamma0.positions
    n, dim = pos0.shape
    n_ev = int(rng.poisson(n * T)) if n else 0
    times = np.sort(rng.random(n_ev) * T)
    who = rng.integers(n, size=n_ev) if n else np.zeros(0, dtype=int)
    jumps = params.kernel.sample(rng, dim, size=n_ev).reshape(n_ev, dim) / params.eps
    if log is not None:
        cur = pos0.copy()
        for t, i, d in zip(times, who, jumps):
            x = cur[i].copy()
            cur[i] = wrap(x + d, torus)
            log.append((float(t), int(ids[i]), x, cur[i].copy()))
    disp = np.zeros_like(pos0)
    done = 0
    snaps = []
    for ts in snap_times:
        m = int(np.searchsorted(times, ts, side="right"))
        np.add.at(disp, who[done:m], jumps[done:m])
        done = m
        snaps.append(Configuration(torus, wrap(pos0 + disp, torus),
                                   interaction_range=gamma0.interaction_range))
    return snaps


def run(gamma0: Configuration, params: KawasakiRateParams, T: float, snap_times, rng,
        event_log: list | None = None) -> list:
    """Sample a trajectory on ``[0, T]`` and return copies of the state at ``snap_times``.

    Sampling is exact in law. In free mode particle ids are not preserved in
    the snapshots (positions are stored in id order of ``gamma0``);
    ``event_log`` receives ``(time, id, from, to)`` tuples if given.
    """
    snap_times = np.sort(np.asarray(list(snap_times), dtype=float))
    if snap_times.size and (snap_times[0] < 0 or snap_times[-1] > T):
        raise ValueError("snapshot times must lie in [0, T]")
    if params.is_free:
        landing_bound_for(params, gamma0.torus.dim)
        return _run_free(gamma0, params, T, snap_times, rng, event_log)
    s = KawasakiState(gamma0.copy(), params, event_log=event_log)
    snaps = []
    k = 0
    while k < snap_times.size:
        rate = s.total_rate
        dt = rng.exponential(1.0 / rate) if rate > 0 else math.inf
        while k < snap_times.size and s.t + dt > snap_times[k]:
            snaps.append(s.gamma.copy())
            k += 1
        if k == snap_times.size:
            break
        s.t += dt
        s._try_jump(rng)
    return snaps


# ---------------------------------------------------------------------------
# generator applied to exponential test functions
# ---------------------------------------------------------------------------
def _check_f(f):
    if getattr(f, "max_value", 0.0) > 0:
        raise ValueError("test function must be non-positive")


def _f_at(f, ys):
    return np.asarray(f(np.atleast_2d(ys)), dtype=float)


def _circle_pieces(params, x, others, f, torus):
    """Pieces of ``[0, L)`` on which the landing integrand is not constant.

    Returns quadrature nodes and weights (kernel density folded in) for the
    pieces inside ``supp f`` and for those within the landing range of some
    other particle, as two separate node sets.
    """
    L = torus.side
    k, eps = params.kernel, params.eps
    phi = _land_potential(params)
    win = f.window
    cuts = [0.0, L, win.lo[0], win.hi[0]]
    cuts += [(x[0] + b) % L for b in k.breakpoints(eps)]
    near_r = 0.0
    if not phi.is_zero and len(others):
        near_r = phi.range
        for b in phi.breakpoints():
            cuts += ((others[:, 0] - b) % L).tolist() + ((others[:, 0] + b) % L).tolist()
    cuts = np.unique(np.clip(cuts, 0.0, L))
    lefts, rights = cuts[:-1], cuts[1:]
    mids = 0.5 * (lefts + rights)
    in_f = win.contains(mids[:, None])
    if near_r > 0:
        dist = np.min(np.abs(min_image_disp(mids[:, None], others[None, :, 0], torus)), axis=1)
        near = dist < near_r
    else:
        near = np.zeros(mids.size, dtype=bool)
    max_len = 0.5 * k.scale() / eps
    out = []
    for mask in (in_f, near):
        if not np.any(mask):
            out.append((np.empty((0, 1)), np.empty(0)))
            continue
        nodes, w = [], []
        for lo, hi in zip(lefts[mask], rights[mask]):
            nd, wd = composite_nodes(lo, hi, (), max_len=max_len, order=16)
            nodes.append(nd)
            w.append(wd)
        nodes = np.concatenate(nodes)
        w = np.concatenate(w)
        dens = k.wrapped_density(min_image_disp(nodes[:, None], x[None, :], torus), eps, torus)
        out.append((nodes[:, None], w * dens))
    return out


def _quad_one(params, f, x, others, fx, torus, e_from):
    """``int dy c(x, y) (e^{f(y) - f(x)} - 1)`` with ``c`` the full rate density (d = 1)."""
    (yf, wf), (yn, wn) = _circle_pieces(params, x, others, f, torus)
    land = _land_potential(params)
    fac0 = float(_exp_combination(params, e_from, 0.0))

    def fac(ys):
        if land.is_zero or len(others) == 0 or len(ys) == 0:
            return np.full(len(ys), fac0)
        e_to = energies_at(land, ys, others, torus)
        return np.asarray(_exp_combination(params, e_from, e_to), dtype=float)

    total_rate = fac0 - float(np.dot(wn, fac0 - fac(yn)))
    birth_part = float(np.dot(wf, fac(yf) * np.expm1(_f_at(f, yf))))
    return math.expm1(-fx) * total_rate + math.exp(-fx) * birth_part


def apply_Leps_to_exp(f, gamma: Configuration, params: KawasakiRateParams, method: str = "quad",
                      mc_n: int = 1000, rng=None) -> EstimateWithError:
    """``(L_eps e^{<f, .>})(gamma)``.

    Equals ``e^{<f, gamma>} sum_x int dy c(x, y, gamma - x) (e^{f(y) - f(x)} - 1)``
    with the periodised kernel. ``method="quad"`` (d = 1, step function ``f``)
    writes the landing integral as the total jump rate, which differs from
    its no-neighbour value only near other particles, plus a correction on
    ``supp f``; both pieces are compact and integrated by Gauss-Legendre split
    at every discontinuity, and ``se = 0`` is reported. ``method="mc"`` draws
    ``mc_n`` targets per particle from the kernel and reports the Monte Carlo
    error.
    """
    _check_f(f)
    n = len(gamma)
    if n == 0:
        return EstimateWithError(0.0, 0.0, 0)
    torus = gamma.torus
    pts = gamma.positions
    fx = _f_at(f, pts)
    F = math.exp(float(fx.sum()))
    dep = _dep_potential(params)
    if method == "quad":
        if torus.dim != 1 or not hasattr(f, "window"):
            raise NotImplementedError("quadrature needs d = 1 and a step function; use method='mc'")
        total = 0.0
        for i in range(n):
            others = np.delete(pts, i, axis=0)
            e_from = _e_from(dep, pts[i], others, torus)
            total += _quad_one(params, f, pts[i], others, float(fx[i]), torus, e_from)
        return EstimateWithError(F * total, 0.0, 0)
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    rng = rng or np.random.default_rng(0)
    per_draw = np.zeros(mc_n)
    land = _land_potential(params)
    for i in range(n):
        others = np.delete(pts, i, axis=0)
        e_from = _e_from(dep, pts[i], others, torus)
        ys = wrap(pts[i] + params.kernel.sample(rng, torus.dim, size=mc_n) / params.eps, torus)
        e_to = energies_at(land, ys, others, torus)
        fac = np.asarray(_exp_combination(params, e_from, e_to), dtype=float)
        per_draw += fac * np.expm1(_f_at(f, ys) - fx[i])
    est = mean_estimate(per_draw)
    return EstimateWithError(F * est.value, F * est.se, est.n)


def _e_from(dep, x, others, torus) -> float:
    if dep.is_zero or len(others) == 0:
        return 0.0
    return float(np.sum(dep(min_image_disp(x[None, :], others, torus))))


def _interval_overlap_periodic(a, b, c, d, s, L):
    """``|[a, b] cap ([c, d] - s)|`` on the circle of length ``L`` (vectorised in ``s``)."""
    s = np.asarray(s, dtype=float)
    tot = np.zeros(s.shape)
    for k in range(-2, 3):
        lo = np.maximum(a, c - s + k * L)
        hi = np.minimum(b, d - s + k * L)
        tot += np.clip(hi - lo, 0.0, None)
    return tot


def free_covariance_torus(rho: float, f, g, t: float, sigma: float, eps: float, L: float) -> float:
    """Exact ``Cov(<f, gamma_0>, <g, gamma_t>)`` for free Gaussian hopping on a circle.

    Initial law Poisson(``rho``); ``f``, ``g`` are one-dimensional step
    functions inside ``[0, L)``. Each particle makes Poisson(``t``) jumps of
    variance ``(sigma / eps)^2``, so the covariance is
    ``rho sum_n P(n) int O(s) N(s; n sigma^2 / eps^2) ds`` with ``O`` the
    periodic overlap of the two supports.
    """
    a, b = f.window.lo[0], f.window.hi[0]
    c, d = g.window.lo[0], g.window.hi[0]
    amp = f.value * g.value

    def O(s):
        return _interval_overlap_periodic(a, b, c, d, s, L)

    n_max = int(t + 12 * math.sqrt(t) + 20)
    total = math.exp(-t) * float(O(0.0))
    # one period of s, split at the kinks of the overlap function
    kinks = [(k0 + L / 2) % L - L / 2 for k0 in (c - a, c - b, d - a, d - b)]
    nodes, w = composite_nodes(-L / 2, L / 2, kinks, max_len=L / 64, order=12)
    over = O(nodes)
    for n in range(1, n_max + 1):
        sd = math.sqrt(n) * sigma / eps
        total += stats.poisson.pmf(n, t) * float(np.dot(w, over * _wrapped_normal(nodes, sd, L)))
    return rho * amp * total


def _wrapped_normal(s, sd, L):
    """Density of ``N(0, sd^2)`` folded onto ``[-L/2, L/2)``."""
    if sd < L / 2:
        K = int(math.ceil(10 * sd / L)) + 1
        return sum(stats.norm.pdf(s + k * L, scale=sd) for k in range(-K, K + 1))
    m = np.arange(1, 60)
    coef = np.exp(-2 * (math.pi * m * sd / L) ** 2)
    return (1 + 2 * np.cos(2 * math.pi * np.outer(s, m) / L) @ coef) / L
