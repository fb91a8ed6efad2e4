"""Exact finite-configuration combinatorics and Lebesgue-Poisson integrals.

Functionals on the subsets of an ``n``-point configuration are stored as
*subset tables*: float arrays of length ``2**n`` indexed by bitmask (bit ``i``
set means point ``i`` is in the subset). The K-transform, the
correlation/Ursell inversion and the partition enumeration all work on these
tables and refuse ``n > 12``.

Lebesgue-Poisson integrals of product functionals factorise,
``int e_lambda(f, eta) lambda(d eta) = exp(int f dx)``, which is what makes the
Poisson correlation functional ``k(eta) = z^|eta|`` solvable in closed form.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._quad import NonIntegrableError, ball_volume, composite_nodes, radial_integral
from .config_space import Configuration, Torus, Window
from .estimation import EstimateWithError, mean_estimate
from .potentials import KawasakiRateParams, PairPotential, energy

MAX_EXACT = 12

__all__ = [
    "MAX_EXACT", "SizeError", "CorrelationSpecError", "TruncationError",
    "bell_number", "set_partitions", "k_transform", "k_transform_table", "e_lambda",
    "subset_table", "correlation_to_ursell", "ursell_to_correlation",
    "PoissonCorrelation", "TabulatedCorrelation", "Ball", "lp_integral_product",
    "c_minus", "c_plus", "estimate_C_u", "lemma1_lhs", "cu_identity_check", "CuIdentityCheck",
    "hat_L_star_minus_eps", "hat_L0_star_minus", "hat_L_star_plus_eps", "hat_L0_star_plus",
    "two_center_integral", "single_point_ratio_quad", "PartitionSet", "correlation_table",
    "decay_probe",
]


class SizeError(ValueError):
    """Exact enumeration requested beyond ``MAX_EXACT`` points."""


class CorrelationSpecError(ValueError):
    """A correlation table that is not a correlation table (``k(empty) != 1``)."""


class TruncationError(ValueError):
    """The truncated Lebesgue-Poisson expansion cannot meet the tolerance."""

    def __init__(self, bound: float, tol: float):
        super().__init__(f"truncation bound {bound:.3g} exceeds tolerance {tol:.3g}")
        self.bound = bound


def _check_size(n: int):
    if n > MAX_EXACT:
        raise SizeError(f"{n} points exceeds the exact-enumeration cap of {MAX_EXACT}")


# ---------------------------------------------------------------------------
# partitions and subset tables
# ---------------------------------------------------------------------------
def bell_number(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def set_partitions(items):
    """Yield every partition of ``items`` as a list of tuples (blocks)."""
    items = list(items)
    _check_size(len(items))
    if not items:
        yield []
        return

    def rec(i, blocks):
        if i == len(items):
            yield [tuple(b) for b in blocks]
            return
        x = items[i]
        for b in blocks:
            b.append(x)
            yield from rec(i + 1, blocks)
            b.pop()
        blocks.append([x])
        yield from rec(i + 1, blocks)
        blocks.pop()

    yield from rec(0, [])


def _as_points(eta) -> np.ndarray:
    if isinstance(eta, Configuration):
        return eta.positions
    arr = np.asarray(eta, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


def subset_table(G: Callable, eta) -> np.ndarray:
    """Tabulate ``G`` on all subsets of ``eta`` (``G`` takes an ``(m, d)`` array)."""
    pts = _as_points(eta)
    n = len(pts)
    _check_size(n)
    table = np.empty(1 << n)
    for mask in range(1 << n):
        idx = [i for i in range(n) if mask >> i & 1]
        table[mask] = G(pts[idx])
    return table


def k_transform_table(G_table: np.ndarray) -> np.ndarray:
    """``(KG)(S) = sum_{T subset S} G(T)`` for every subset ``S`` (zeta transform)."""
    out = np.array(G_table, dtype=float)
    n = int(round(math.log2(out.size)))
    _check_size(n)
    for i in range(n):
        bit = 1 << i
        idx = np.arange(out.size)
        sel = idx[(idx & bit) != 0]
        out[sel] += out[sel ^ bit]
    return out


def k_transform(G: Callable, gamma) -> float:
    """``(KG)(gamma) = sum_{eta subset gamma} G(eta)``, exactly, over all ``2^n`` subsets."""
    pts = _as_points(gamma)
    n = len(pts)
    _check_size(n)
    total = 0.0
    for m in range(n + 1):
        for idx in itertools.combinations(range(n), m):
            total += G(pts[list(idx)])
    return total


def e_lambda(f: Callable, eta) -> float:
    """``prod_{x in eta} f(x)`` with the empty product equal to 1."""
    pts = _as_points(eta)
    if len(pts) == 0:
        return 1.0
    return float(np.prod(np.asarray(f(pts), dtype=float)))


def _submasks_with_low(mask: int):
    low = mask & -mask
    rest = mask ^ low
    sub = rest
    while True:
        yield sub | low
        if sub == 0:
            return
        sub = (sub - 1) & rest


def correlation_to_ursell(k_table) -> np.ndarray:
    """Invert ``k(S) = sum_{pi in P(S)} prod_{B in pi} u(B)`` on a subset table.

    Uses the recursion ``k(S) = sum_{T subset S, T contains min S} u(T) k(S - T)``.
    The entry for the empty set is set to 0.
    """
    k = np.asarray(k_table, dtype=float)
    n = int(round(math.log2(k.size)))
    if 1 << n != k.size:
        raise ValueError("table length must be a power of two")
    _check_size(n)
    if k[0] != 1.0:
        raise CorrelationSpecError(f"k(empty) must be 1, got {k[0]}")
    u = np.zeros_like(k)
    for S in range(1, k.size):
        acc = k[S]
        for T in _submasks_with_low(S):
            if T != S:
                acc -= u[T] * k[S ^ T]
        u[S] = acc
    return u


def ursell_to_correlation(u_table) -> np.ndarray:
    """Inverse of :func:`correlation_to_ursell`; the result has ``k(empty) = 1``."""
    u = np.asarray(u_table, dtype=float)
    n = int(round(math.log2(u.size)))
    _check_size(n)
    k = np.zeros_like(u)
    k[0] = 1.0
    for S in range(1, u.size):
        k[S] = sum(u[T] * k[S ^ T] for T in _submasks_with_low(S))
    return k


# ---------------------------------------------------------------------------
# correlation functionals
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PoissonCorrelation:
    """``k(eta) = z^|eta|``: the Poisson process of intensity ``z``."""

    z: float

    def __post_init__(self):
        if not self.z > 0:
            raise ValueError("z must be positive")

    translation_invariant = True
    s = 0.0

    @property
    def C(self):
        return self.z

    def k(self, eta) -> float:
        return self.z ** len(_as_points(eta))


@dataclass
class TabulatedCorrelation:
    """Correlation functions ``k^(n)`` given as callables on ``(n, d)`` arrays.

    ``k_fns[n]`` must be defined for ``1 <= n <= n_max``; the bound
    ``k(eta) <= (|eta|!)^s C^|eta|`` is declared through ``s`` and ``C``.
    """

    k_fns: dict
    s: float
    C: float
    translation_invariant: bool = True
    n_max: int = field(init=False)

    def __post_init__(self):
        if not 0 <= self.s < 1 or not self.C > 0:
            raise ValueError("need 0 <= s < 1 and C > 0")
        self.n_max = max(self.k_fns)

    def k(self, eta) -> float:
        pts = _as_points(eta)
        n = len(pts)
        if n == 0:
            return 1.0
        if n not in self.k_fns:
            raise KeyError(f"k^({n}) not tabulated")
        return float(self.k_fns[n](pts))

    def check_bound(self, rng, trials: int = 200, dim: int = 1, box: float = 1.0) -> bool:
        """Validate the declared growth bound on random small configurations."""
        for _ in range(trials):
            n = int(rng.integers(1, self.n_max + 1))
            eta = rng.random((n, dim)) * box
            if self.k(eta) > math.factorial(n) ** self.s * self.C ** n * (1 + 1e-12):
                return False
        return True


# ---------------------------------------------------------------------------
# Lebesgue-Poisson integrals
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float


def _integrate_over(f, domain, rng=None, mc_n: int = 200_000) -> float:
    if isinstance(domain, Torus):
        domain = Window((0.0,) * domain.dim, (domain.side,) * domain.dim)
    if isinstance(domain, Ball):
        c = np.atleast_1d(np.asarray(domain.center, float))
        if c.size == 1:
            domain = Window((c[0] - domain.radius,), (c[0] + domain.radius,))
        else:
            rng = rng or np.random.default_rng(0)
            pts = c + domain.radius * _ball_points(rng, mc_n, c.size)
            vals = np.asarray(f(pts), dtype=float)
            return float(ball_volume(domain.radius, c.size) * vals.mean())
    lo, hi = np.array(domain.lo), np.array(domain.hi)
    if domain.dim == 1:
        bps = []
        if hasattr(f, "breakpoints"):
            bps = list(f.breakpoints(0))
        nodes, w = composite_nodes(lo[0], hi[0], bps, max_len=(hi[0] - lo[0]) / 64, order=16)
        vals = np.asarray(f(nodes[:, None]), dtype=float)
        return float(np.dot(w, vals))
    rng = rng or np.random.default_rng(0)
    pts = lo + (hi - lo) * rng.random((mc_n, domain.dim))
    return float(np.prod(hi - lo) * np.mean(np.asarray(f(pts), dtype=float)))


def _ball_points(rng, n, dim):
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random(n)[:, None] ** (1.0 / dim)


def lp_integral_product(f: Callable, domain) -> float:
    """``int e_lambda(f, eta) lambda(d eta) = exp(int_domain f dx)``.

    ``domain`` is a :class:`Torus`, :class:`Window` or :class:`Ball`. In one
    dimension the integral uses composite Gauss-Legendre split at
    ``f.breakpoints`` when available; higher dimensions use Monte Carlo with a
    fixed seed.
    """
    val = _integrate_over(f, domain)
    if not np.isfinite(val):
        raise NonIntegrableError("integral of f is not finite")
    return math.exp(val)


def _mayer_integral(g_of_phi, phi: PairPotential, dim: int) -> float:
    def g(r):
        p = phi.radial(r)
        with np.errstate(over="ignore", invalid="ignore"):
            return g_of_phi(p)
    return radial_integral(g, phi.range, dim, phi.breakpoints())


def _minus_mayer(phi, dim):
    """``int (exp(-phi) - 1) dx`` (finite for any stable compact potential)."""
    return _mayer_integral(lambda p: np.exp(-p) - 1.0, phi, dim)


def _plus_mayer(phi, dim):
    """``int (exp(phi) - 1) dx``; infinite for a hard core."""
    if phi.hard_core > 0:
        raise NonIntegrableError("exp(phi) - 1 is not integrable across a hard core")
    return _mayer_integral(lambda p: np.exp(p) - 1.0, phi, dim)


def _truncated_expansion(k: TabulatedCorrelation, g_radial, R, dim, shift_origin: bool,
                         tol, rng, mc_n):
    """``sum_{n <= n_max} (1/n!) int prod g(x_i) k(xi [u 0]) dx`` by Monte Carlo."""
    g1 = radial_integral(lambda r: np.abs(g_radial(r)), R, dim)
    extra = 1 if shift_origin else 0
    n_top = k.n_max - extra
    bound = 0.0
    for n in range(n_top + 1, n_top + 60):
        m = n + extra
        bound += math.exp(k.s * math.lgamma(m + 1) + m * math.log(k.C)
                          + n * math.log(max(g1, 1e-300)) - math.lgamma(n + 1))
    if bound > tol:
        raise TruncationError(bound, tol)
    rng = rng or np.random.default_rng(0)
    V = ball_volume(R, dim)
    total = k.k(np.zeros((1, dim))) if shift_origin else 1.0
    for n in range(1, n_top + 1):
        acc = 0.0
        for _ in range(mc_n):
            x = R * _ball_points(rng, n, dim)
            prod = float(np.prod(g_radial(np.linalg.norm(x, axis=1))))
            if prod == 0.0:
                continue
            eta = np.vstack([np.zeros((1, dim)), x]) if shift_origin else x
            acc += prod * k.k(eta)
        total += V ** n * acc / mc_n / math.factorial(n)
    return total


def c_minus(k, phi_plus: PairPotential, dim: int = 1, tol: float = 1e-3,
            rng=None, mc_n: int = 20_000) -> float:
    """``c^-(k) = int lambda(d xi) e_lambda(e^{-phi+} - 1, xi) k(xi)``."""
    if isinstance(k, PoissonCorrelation):
        if phi_plus.is_zero:
            return 1.0
        return math.exp(k.z * _minus_mayer(phi_plus, dim))

    def g(r):
        with np.errstate(over="ignore"):
            return np.exp(-phi_plus.radial(r)) - 1.0
    return _truncated_expansion(k, g, phi_plus.range, dim, False, tol, rng, mc_n)


def c_plus(k, phi_minus: PairPotential, dim: int = 1, tol: float = 1e-3,
           rng=None, mc_n: int = 20_000) -> float:
    """``c^+(k) = int lambda(d xi) e_lambda(e^{phi-} - 1, xi) k(xi u {0})``."""
    if isinstance(k, PoissonCorrelation):
        if phi_minus.is_zero:
            return k.z
        return k.z * math.exp(k.z * _plus_mayer(phi_minus, dim))
    if phi_minus.hard_core > 0:
        raise NonIntegrableError("exp(phi) - 1 is not integrable across a hard core")

    def g(r):
        return np.exp(phi_minus.radial(r)) - 1.0
    return _truncated_expansion(k, g, phi_minus.range, dim, True, tol, rng, mc_n)


# ---------------------------------------------------------------------------
# Gibbs-sample statistics for the constants C_u
# ---------------------------------------------------------------------------
def _check_u(u):
    if not 0 <= u <= 1:
        raise ValueError(f"u must lie in [0, 1], got {u}")


def _per_sample_C(gamma: Configuration, phi, u, origins):
    """Average of ``exp(-(1-u) E(o, gamma))`` over the query points ``origins``."""
    if u == 1 or phi.is_zero:
        return 1.0
    es = np.array([energy(phi, o, gamma) for o in origins])
    with np.errstate(over="ignore"):
        return float(np.mean(np.exp(-(1 - u) * es)))


def _origins(torus, n_origins, rng):
    if n_origins == 1 or rng is None:
        return np.zeros((max(n_origins, 1), torus.dim))[:1]
    return rng.random((n_origins, torus.dim)) * torus.side


def estimate_C_u(samples, phi: PairPotential, u: float, n_origins: int = 1,
                 rng=None) -> EstimateWithError:
    """``C_u = E_mu exp[-(1-u) <phi, gamma>]`` with ``<phi, gamma> = E(0, gamma)``.

    With ``n_origins > 1`` and an ``rng``, each sample contributes the average
    over uniformly placed origins (translation invariance on the torus),
    which reduces variance without bias.
    """
    _check_u(u)
    if not samples:
        raise ValueError("no samples")
    torus = samples[0].torus
    vals = []
    for g in samples:
        vals.append(_per_sample_C(g, phi, u, _origins(torus, n_origins, rng)))
    return mean_estimate(vals)


def _boltzmann_sum(gamma, phi, u, f):
    total = 0.0
    for pid in gamma:
        x = gamma.position(pid)
        fx = float(f(x))
        if fx == 0.0:
            continue
        e = energy(phi, x, gamma, exclude=pid) if u > 0 else 0.0
        total += fx * math.exp(u * e)
    return total


def lemma1_lhs(samples, phi: PairPotential, u: float, f) -> EstimateWithError:
    """Monte Carlo value of ``E_mu sum_{x in gamma} f(x) exp(u E(x, gamma - x))``."""
    _check_u(u)
    return mean_estimate([_boltzmann_sum(g, phi, u, f) for g in samples])


@dataclass
class CuIdentityCheck:
    lhs: EstimateWithError
    rhs: EstimateWithError
    z_score: float
    u: float


def cu_identity_check(samples, phi: PairPotential, z: float, u: float, f, f_integral: float,
                 n_origins: int = 1, rng=None) -> CuIdentityCheck:
    """Paired test of ``E sum f(x) e^{u E(x, gamma - x)} = z (int f) C_u``.

    The z-score uses per-sample differences, so the correlation between the
    two sides (same samples) is accounted for.
    """
    _check_u(u)
    torus = samples[0].torus
    lhs_v = np.array([_boltzmann_sum(g, phi, u, f) for g in samples])
    c_v = np.array([_per_sample_C(g, phi, u, _origins(torus, n_origins, rng)) for g in samples])
    rhs_v = z * f_integral * c_v
    diff = mean_estimate(lhs_v - rhs_v)
    zs = diff.z_against(0.0)
    return CuIdentityCheck(mean_estimate(lhs_v), mean_estimate(rhs_v), zs, u)


# ---------------------------------------------------------------------------
# dual generators on Poisson correlation functionals
# ---------------------------------------------------------------------------
def _energy_free(phi: PairPotential, x, others: np.ndarray) -> float:
    """``E^phi(x, others)`` in R^d (no periodic images)."""
    if phi.is_zero or len(others) == 0:
        return 0.0
    return float(np.sum(phi(np.asarray(x, float)[None, :] - others)))


def two_center_integral(phi_minus: PairPotential, phi_plus: PairPotential, sep,
                        order: int = 16, mc_n: int = 20_000) -> float:
    """``int [exp(phi^-(w) - phi^+(w - sep)) - 1] dw`` over R^d.

    Exact up to Gauss-Legendre error in one dimension (split at every
    discontinuity); Monte Carlo over the overlap region otherwise.
    """
    if phi_minus.hard_core > 0:
        raise NonIntegrableError("exp(phi^-) - 1 is not integrable across a hard core")
    sep = np.atleast_1d(np.asarray(sep, dtype=float))
    dim = sep.size
    Rm, Rp = phi_minus.range, phi_plus.range

    def integrand(w):
        with np.errstate(over="ignore", invalid="ignore"):
            return np.exp(phi_minus(w) - phi_plus(w - sep)) - 1.0

    if dim == 1:
        s = float(sep[0])
        lo = min(-Rm, s - Rp)
        hi = max(Rm, s + Rp)
        if hi <= lo:
            return 0.0
        bps = [b * sgn for b in phi_minus.breakpoints() for sgn in (-1, 1)]
        bps += [s + b * sgn for b in phi_plus.breakpoints() for sgn in (-1, 1)]
        nodes, w = composite_nodes(lo, hi, bps, order=order)
        return float(np.dot(w, integrand(nodes[:, None])))
    # separate the two Mayer parts, integrate the overlap correction by MC
    base = 0.0
    if not phi_minus.is_zero:
        base += _plus_mayer(phi_minus, dim)
    if not phi_plus.is_zero:
        base += _minus_mayer(phi_plus, dim)
    if np.linalg.norm(sep) > Rm + Rp or phi_minus.is_zero or phi_plus.is_zero:
        return base
    rng = np.random.default_rng(12345)
    pts = Rm * _ball_points(rng, mc_n, dim)
    with np.errstate(over="ignore", invalid="ignore"):
        em = np.exp(phi_minus(pts))
        ep = np.exp(-phi_plus(pts - sep))
        corr = (em - 1.0) * (ep - 1.0)
    return base + float(ball_volume(Rm, dim) * corr.mean())


def _require_poisson(k):
    if not isinstance(k, PoissonCorrelation):
        raise NotImplementedError("dual-generator formulas are evaluated for Poisson k only")


def _check_eta(eta):
    pts = _as_points(eta)
    if len(pts) > 4:
        raise SizeError("dual-generator evaluation is limited to |eta| <= 4")
    return pts


def _mc_deltas(params: KawasakiRateParams, dim, mc_n, rng, deltas):
    if deltas is not None:
        return np.asarray(deltas, dtype=float).reshape(-1, dim)
    return params.kernel.sample(rng, dim, size=mc_n)


def hat_L_star_minus_eps(k, eta, params: KawasakiRateParams, mc_n: int = 10_000, rng=None,
                         deltas=None) -> EstimateWithError:
    """Monte Carlo value of the death part of the dual hopping generator at ``eta``.

    ``-z^|eta| sum_x E_y[r(x, y, eta - x) exp(z I(y - x))]`` with
    ``y = x + delta/eps``, ``delta ~ a``, and ``I`` the two-centre Mayer
    integral. Pass the same ``deltas`` across ``eps`` values for common random
    numbers.
    """
    _require_poisson(k)
    pts = _check_eta(eta)
    z, n, dim = k.z, len(pts), pts.shape[1]
    ds = _mc_deltas(params, dim, mc_n, rng, deltas)
    per_draw = np.zeros(len(ds))
    for i, x in enumerate(pts):
        rest = np.delete(pts, i, axis=0)
        e_from = _energy_free(params.phi_minus, x, rest)
        for j, d in enumerate(ds):
            y = x + d / params.eps
            r = math.exp(e_from - _energy_free(params.phi_plus, y, rest))
            if r == 0.0:
                continue
            I = two_center_integral(params.phi_minus, params.phi_plus, y - x)
            per_draw[j] += r * math.exp(z * I)
    est = mean_estimate(per_draw)
    scale = z ** n
    return EstimateWithError(-scale * est.value, scale * est.se, est.n)


def hat_L0_star_minus(k, eta, params: KawasakiRateParams, dim: int | None = None) -> float:
    """``-z^|eta| sum_x exp[E^-(x, eta - x)] exp(z int (e^{phi^-} - 1))``."""
    _require_poisson(k)
    pts = _check_eta(eta)
    dim = pts.shape[1]
    z = k.z
    mayer = 0.0 if params.phi_minus.is_zero else _plus_mayer(params.phi_minus, dim)
    tot = sum(math.exp(_energy_free(params.phi_minus, x, np.delete(pts, i, axis=0)))
              for i, x in enumerate(pts))
    return -(z ** len(pts)) * tot * math.exp(z * mayer)


def hat_L_star_plus_eps(k, eta, params: KawasakiRateParams, mc_n: int = 10_000, rng=None,
                        deltas=None) -> EstimateWithError:
    """Monte Carlo value of the birth part of the dual hopping generator at ``eta``.

    ``z^|eta| sum_y E_x[r(x, y, eta - y) exp(z I(y - x))]`` with
    ``x = y + delta/eps``.
    """
    _require_poisson(k)
    pts = _check_eta(eta)
    z, n, dim = k.z, len(pts), pts.shape[1]
    ds = _mc_deltas(params, dim, mc_n, rng, deltas)
    per_draw = np.zeros(len(ds))
    for i, y in enumerate(pts):
        rest = np.delete(pts, i, axis=0)
        e_to = _energy_free(params.phi_plus, y, rest)
        for j, d in enumerate(ds):
            x = y + d / params.eps
            r = math.exp(_energy_free(params.phi_minus, x, rest) - e_to)
            if r == 0.0:
                continue
            I = two_center_integral(params.phi_minus, params.phi_plus, y - x)
            per_draw[j] += r * math.exp(z * I)
    est = mean_estimate(per_draw)
    scale = z ** n
    return EstimateWithError(scale * est.value, scale * est.se, est.n)


def hat_L0_star_plus(k, eta, params: KawasakiRateParams) -> float:
    """``z^{|eta|-1} sum_y exp[-E^+(y, eta - y)] exp(z int (e^{-phi^+} - 1))``."""
    _require_poisson(k)
    pts = _check_eta(eta)
    dim = pts.shape[1]
    z = k.z
    mayer = 0.0 if params.phi_plus.is_zero else _minus_mayer(params.phi_plus, dim)
    tot = 0.0
    for i, y in enumerate(pts):
        e = _energy_free(params.phi_plus, y, np.delete(pts, i, axis=0))
        tot += math.exp(-e) if np.isfinite(e) else 0.0
    return z ** (len(pts) - 1) * tot * math.exp(z * mayer)


class PartitionSet:
    """All set partitions of ``{0, ..., n-1}``; ``len`` equals the Bell number."""

    def __init__(self, n: int):
        _check_size(n)
        self.n = n

    def __len__(self):
        return bell_number(self.n)

    def __iter__(self):
        return set_partitions(range(self.n))


def correlation_table(spec, eta) -> np.ndarray:
    """Subset table of ``spec.k`` on ``eta`` (entry 0 is ``k(empty) = 1``)."""
    return subset_table(spec.k, eta)


def decay_probe(spec, eta, stretches=(1.0, 2.0, 4.0, 8.0)) -> np.ndarray:
    """Full Ursell function ``u(stretch * eta)`` for each stretch factor.

    For a spec with decaying correlations these values should shrink as the
    points separate. No rate is asserted.
    """
    pts = _as_points(eta)
    full = (1 << len(pts)) - 1
    out = []
    for s in stretches:
        u = correlation_to_ursell(correlation_table(spec, s * pts))
        out.append(u[full])
    return np.array(out)


def single_point_ratio_quad(k, params: KawasakiRateParams, sign: str) -> float:
    """Quadrature value of the eps-to-limit ratio of the dual generator at one point (d = 1).

    For a single point the relative energies vanish and the eps expression is
    ``E_delta exp(z I(delta / eps))`` times ``-z`` (minus part) or ``z`` (plus
    part), with ``delta`` Gaussian of the kernel's ``sigma``.
    """
    _require_poisson(k)
    if not hasattr(params.kernel, "sigma"):
        raise NotImplementedError("quadrature oracle implemented for the Gaussian kernel")
    z, eps, sig = k.z, params.eps, params.kernel.sigma
    eta = np.zeros((1, 1))
    reach = params.phi_minus.range + params.phi_plus.range
    bps = []
    for b in (reach, abs(params.phi_minus.range - params.phi_plus.range)):
        bps += [b * eps, -b * eps]
    for bm in params.phi_minus.breakpoints():
        for bp in params.phi_plus.breakpoints():
            for s1 in (-1, 1):
                for s2 in (-1, 1):
                    bps.append((s1 * bm + s2 * bp) * eps)
    nodes, w = composite_nodes(-10 * sig, 10 * sig, bps, max_len=sig / 8, order=16)
    sgn = 1.0 if sign == "minus" else -1.0
    I = np.array([two_center_integral(params.phi_minus, params.phi_plus, [sgn * d / eps])
                  for d in nodes])
    dens = np.exp(-nodes ** 2 / (2 * sig ** 2)) / math.sqrt(2 * math.pi * sig ** 2)
    mean = float(np.dot(w, dens * np.exp(z * I)))
    if sign == "minus":
        return -z * mean / hat_L0_star_minus(k, eta, params)
    if sign == "plus":
        return z * mean / hat_L0_star_plus(k, eta, params)
    raise ValueError("sign must be 'minus' or 'plus'")
