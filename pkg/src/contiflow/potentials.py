"""Pair potentials, jump kernels, hopping rates and admissibility checks.

Potentials are parametric radial families with compact support so that
ranges, stability constants and the integrals entering the admissibility
conditions are known exactly. All potentials evaluate vectorised over an
array of displacement vectors of shape ``(..., d)`` and may return ``+inf``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._quad import NonIntegrableError, ball_volume, radial_integral
from .config_space import Configuration, Torus, min_image_disp, wrap

__all__ = [
    "PairPotential", "ZeroPotential", "SquareWell", "GaussianBump", "HardCoreWell",
    "TabulatedRadial", "ScaledPotential", "make_potential",
    "JumpKernel", "GaussianKernel", "UniformBallKernel", "make_kernel",
    "KawasakiRateParams", "ConsistencyError", "ConfigurationError",
    "eval_phi", "energy", "energies_at", "sample_jump", "check_stability",
    "check_low_activity", "check_condition_12", "kawasaki_rate", "rate_factor",
    "StabilityReport", "LowActivityReport", "Condition12Report", "NonIntegrableError",
]


class ConsistencyError(RuntimeError):
    """An illegal configuration was reached (e.g. overlapping hard cores)."""


class ConfigurationError(ValueError):
    """Parameters that make a simulation scheme impossible to set up."""


# ---------------------------------------------------------------------------
# pair potentials
# ---------------------------------------------------------------------------
class PairPotential:
    """Base class: even, radial, compactly supported ``phi: R^d -> R u {+inf}``."""

    family = "abstract"
    range: float = 0.0
    stability_B: float = 0.0
    hard_core: float = 0.0

    def radial(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, disp) -> np.ndarray:
        disp = np.asarray(disp, dtype=float)
        if disp.ndim == 0:
            disp = disp.reshape(1)
        r = np.sqrt(np.sum(disp * disp, axis=-1))
        return self.radial(r)

    def breakpoints(self) -> tuple:
        """Radii where the radial profile may be discontinuous."""
        return (self.range,)

    @property
    def is_zero(self) -> bool:
        return self.range == 0.0

    @property
    def negative_part(self) -> float:
        """``max(0, -inf_x phi(x))``."""
        r = np.linspace(0.0, self.range, 2001)
        vals = self.radial(r)
        finite = vals[np.isfinite(vals)]
        return float(max(0.0, -finite.min())) if finite.size else 0.0

    @property
    def nonnegative(self) -> bool:
        return self.negative_part == 0.0

    def packing_number(self, dim: int) -> int | None:
        """Max number of legal points within ``range`` of a point, or None if unbounded."""
        r0 = self.hard_core
        if r0 <= 0:
            return None
        if dim == 1:
            return 2 * int(math.floor(self.range / r0))
        return int(((self.range + r0 / 2) / (r0 / 2)) ** dim) - 1

    def landing_bound(self, dim: int) -> float | None:
        """Upper bound on ``exp(-E(y, gamma))`` over legal configurations."""
        m = self.negative_part
        if m == 0:
            return 1.0
        n = self.packing_number(dim)
        if n is None:
            return None
        return math.exp(m * n)


@dataclass(frozen=True, repr=True)
class ZeroPotential(PairPotential):
    family = "zero"
    range: float = 0.0

    def radial(self, r):
        return np.zeros(np.shape(r))

    def breakpoints(self):
        return ()


@dataclass(frozen=True)
class SquareWell(PairPotential):
    """``theta`` for ``|x| <= R``, zero outside."""

    theta: float
    R: float
    family = "square_well"

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("square well needs R > 0")

    @property
    def range(self):
        return self.R

    @property
    def stability_B(self):
        # a negative well without a hard core admits arbitrarily dense clusters
        return 0.0 if self.theta >= 0 else math.inf

    def radial(self, r):
        return np.where(np.asarray(r) <= self.R, self.theta, 0.0)


@dataclass(frozen=True)
class GaussianBump(PairPotential):
    """``A exp(-|x|^2 / (2 sigma^2))`` truncated at ``cutoff`` (default 4 sigma)."""

    A: float
    sigma: float
    cutoff: float | None = None
    family = "gaussian_bump"

    def __post_init__(self):
        if self.A < 0 or self.sigma <= 0:
            raise ValueError("gaussian bump needs A >= 0 and sigma > 0")
        if self.cutoff is None:
            object.__setattr__(self, "cutoff", 4.0 * self.sigma)

    @property
    def range(self):
        return self.cutoff

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.cutoff, self.A * np.exp(-r * r / (2 * self.sigma ** 2)), 0.0)


@dataclass(frozen=True)
class HardCoreWell(PairPotential):
    """``+inf`` for ``|x| < r0``, ``theta`` on ``r0 <= |x| <= R``, zero beyond."""

    r0: float
    theta: float = 0.0
    R: float | None = None
    family = "hard_core"

    def __post_init__(self):
        if self.R is None:
            object.__setattr__(self, "R", self.r0)
        if not 0 < self.r0 <= self.R:
            raise ValueError("hard core needs 0 < r0 <= R")

    @property
    def range(self):
        return self.R

    @property
    def hard_core(self):
        return self.r0

    @property
    def stability_B(self):
        if self.theta >= 0:
            return 0.0
        return 0.5 * abs(self.theta) * self.packing_number(1)

    def stability_B_dim(self, dim: int) -> float:
        if self.theta >= 0:
            return 0.0
        return 0.5 * abs(self.theta) * self.packing_number(dim)

    def breakpoints(self):
        return (self.r0, self.R)

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.r0, np.inf, np.where(r <= self.R, self.theta, 0.0))


class TabulatedRadial(PairPotential):
    """Piecewise-linear radial profile on ``r_grid``; zero beyond the last node.

    The stability constant is declared by the user and should be validated
    with :func:`check_stability`.
    """

    family = "tabulated"

    def __init__(self, r_grid, values, stability_B: float, hard_core: float = 0.0):
        r_grid = np.asarray(r_grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if r_grid.ndim != 1 or r_grid.shape != values.shape or np.any(np.diff(r_grid) <= 0):
            raise ValueError("r_grid must be increasing and match values")
        self.r_grid, self.values = r_grid, values
        self.range = float(r_grid[-1])
        self.stability_B = float(stability_B)
        self.hard_core = float(hard_core)

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        out = np.interp(r, self.r_grid, self.values, right=0.0)
        out = np.where(r > self.range, 0.0, out)
        return np.where(r < self.hard_core, np.inf, out)

    def breakpoints(self):
        return tuple(self.r_grid) + ((self.hard_core,) if self.hard_core else ())

    def __repr__(self):
        return f"TabulatedRadial(n={self.r_grid.size}, range={self.range}, B={self.stability_B})"


class ScaledPotential(PairPotential):
    """``factor * phi`` with the convention ``0 * inf = 0``."""

    family = "scaled"

    def __init__(self, base: PairPotential, factor: float):
        if factor < 0:
            raise ValueError("scaling factor must be non-negative")
        self.base, self.factor = base, float(factor)
        self.range = base.range if self.factor > 0 else 0.0
        self.stability_B = self.factor * base.stability_B if self.factor > 0 else 0.0
        self.hard_core = base.hard_core if self.factor > 0 else 0.0

    def radial(self, r):
        if self.factor == 0:
            return np.zeros(np.shape(r))
        return self.factor * self.base.radial(r)

    def breakpoints(self):
        return self.base.breakpoints() if self.factor > 0 else ()

    def __repr__(self):
        return f"ScaledPotential({self.base!r}, {self.factor})"


def make_potential(family: str, **params) -> PairPotential:
    """Build a potential from a family name and keyword parameters (config files)."""
    family = family.lower()
    if family == "zero":
        return ZeroPotential()
    if family == "square_well":
        return SquareWell(float(params["theta"]), float(params["R"]))
    if family == "gaussian_bump":
        cutoff = params.get("cutoff")
        return GaussianBump(float(params["A"]), float(params["sigma"]),
                            None if cutoff is None else float(cutoff))
    if family == "hard_core":
        R = params.get("R")
        return HardCoreWell(float(params["r0"]), float(params.get("theta", 0.0)),
                            None if R is None else float(R))
    raise ValueError(f"unknown potential family {family!r}")


def eval_phi(phi: PairPotential, disp):
    """Value of ``phi`` at a displacement (float for one vector, array otherwise)."""
    disp = np.asarray(disp, dtype=float)
    out = phi(disp)
    return float(out) if disp.ndim <= 1 else out


def energy(phi: PairPotential, x, gamma: Configuration, exclude: int | None = None) -> float:
    """``E^phi(x, gamma) = sum_{y in gamma} phi(x - y)``, skipping id ``exclude``.

    Terms are summed in id order, so the result does not depend on the cell
    layout. Returns ``+inf`` if any term is infinite.
    """
    if phi.range == 0.0 or len(gamma) == 0:
        return 0.0
    disps = gamma.neighbor_disps(x, phi.range, exclude)
    if disps.shape[0] == 0:
        return 0.0
    return float(np.sum(phi(disps)))


def energies_at(phi: PairPotential, ys, others: np.ndarray, torus: Torus) -> np.ndarray:
    """Vectorised ``E(y, others)`` for many points ``y`` against a small point array."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if phi.range == 0.0 or len(others) == 0:
        return np.zeros(ys.shape[0])
    disp = min_image_disp(ys[:, None, :], np.asarray(others)[None, :, :], torus)
    return np.sum(phi(disp), axis=1)


# ---------------------------------------------------------------------------
# jump kernels
# ---------------------------------------------------------------------------
class JumpKernel:
    """Even probability density ``a`` on R^d; ``a_eps(x) = eps^d a(eps x)``."""

    family = "abstract"

    def density(self, disp) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng, dim: int, size=None) -> np.ndarray:
        raise NotImplementedError

    def scale(self) -> float:
        """Characteristic length of the unscaled kernel."""
        raise NotImplementedError

    def support_radius(self) -> float:
        return math.inf

    def scaled_density(self, disp, eps: float) -> np.ndarray:
        disp = np.asarray(disp, dtype=float)
        d = disp.shape[-1] if disp.ndim else 1
        return eps ** d * self.density(eps * disp)

    def wrapped_density(self, disp, eps: float, torus: Torus) -> np.ndarray:
        """Density of ``wrap(x + delta/eps) - x`` at a min-image displacement."""
        disp = np.asarray(disp, dtype=float)
        reach = min(self.support_radius(), 10.0 * self.scale()) / eps
        K = int(math.ceil(reach / torus.side)) + 1
        total = np.zeros(disp.shape[:-1])
        shifts = range(-K, K + 1)
        for k in itertools.product(shifts, repeat=torus.dim):
            total = total + self.scaled_density(disp + torus.side * np.asarray(k, float), eps)
        return total

    def breakpoints(self, eps: float) -> tuple:
        return ()


@dataclass(frozen=True)
class GaussianKernel(JumpKernel):
    sigma: float = 1.0
    family = "gaussian"

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    def density(self, disp):
        disp = np.asarray(disp, dtype=float)
        d = disp.shape[-1]
        r2 = np.sum(disp * disp, axis=-1)
        return np.exp(-r2 / (2 * self.sigma ** 2)) / (2 * math.pi * self.sigma ** 2) ** (d / 2)

    def sample(self, rng, dim, size=None):
        shape = (dim,) if size is None else (size, dim)
        return self.sigma * rng.standard_normal(shape)

    def scale(self):
        return self.sigma


@dataclass(frozen=True)
class UniformBallKernel(JumpKernel):
    r: float = 1.0
    family = "uniform_ball"

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("radius must be positive")

    def density(self, disp):
        disp = np.asarray(disp, dtype=float)
        d = disp.shape[-1]
        inside = np.sum(disp * disp, axis=-1) <= self.r ** 2
        return np.where(inside, 1.0 / ball_volume(self.r, d), 0.0)

    def sample(self, rng, dim, size=None):
        n = 1 if size is None else size
        g = rng.standard_normal((n, dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = self.r * rng.random(n) ** (1.0 / dim)
        out = g * rad[:, None]
        return out[0] if size is None else out

    def scale(self):
        return self.r

    def support_radius(self):
        return self.r

    def breakpoints(self, eps):
        return (-self.r / eps, self.r / eps)


def make_kernel(family: str, **params) -> JumpKernel:
    family = family.lower()
    if family == "gaussian":
        return GaussianKernel(float(params.get("sigma", 1.0)))
    if family == "uniform_ball":
        return UniformBallKernel(float(params.get("r", 1.0)))
    raise ValueError(f"unknown kernel family {family!r}")


def sample_jump(kernel: JumpKernel, eps: float, x, torus: Torus, rng) -> np.ndarray:
    """Hop target ``wrap(x + delta/eps)`` with ``delta ~ a``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    delta = kernel.sample(rng, torus.dim)
    return wrap(np.asarray(x, float) + delta / eps, torus)


# ---------------------------------------------------------------------------
# hopping rates
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class UVMode:
    u: float
    v: float
    phi: PairPotential
    z: float = 1.0


@dataclass(frozen=True)
class KawasakiRateParams:
    """Rate ``c(x, y, gamma - x) = a_eps(x - y) exp[E^-(x) - E^+(y)]``.

    In ``uv`` mode the rate is the half-sum of the two exponentials built
    from one potential ``phi`` with ``phi^- = u phi, phi^+ = (1 - v) phi`` and
    ``phi^- = v phi, phi^+ = (1 - u) phi``; ``phi_minus``/``phi_plus`` then hold
    the first pair.
    """

    phi_minus: PairPotential
    phi_plus: PairPotential
    kernel: JumpKernel
    eps: float = 1.0
    uv: UVMode | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.uv is not None:
            u, v = self.uv.u, self.uv.v
            if not (0 <= u <= 1 and 0 <= v <= 1):
                raise ValueError("u, v must lie in [0, 1]")

    @classmethod
    def symmetric(cls, phi: PairPotential, u: float, v: float, kernel: JumpKernel,
                  eps: float = 1.0, z: float = 1.0, check: bool = True) -> "KawasakiRateParams":
        if check:
            rep = check_condition_12(phi, u, v)
            if not rep.holds:
                raise ConfigurationError(
                    f"integrability condition fails for u={u}, v={v}: value={rep.value}")
        return cls(ScaledPotential(phi, u), ScaledPotential(phi, 1 - v), kernel, eps,
                   UVMode(u, v, phi, z))

    def with_eps(self, eps: float) -> "KawasakiRateParams":
        return KawasakiRateParams(self.phi_minus, self.phi_plus, self.kernel, eps, self.uv)

    @property
    def interaction_range(self) -> float:
        if self.uv is not None:
            return self.uv.phi.range
        return max(self.phi_minus.range, self.phi_plus.range)

    @property
    def is_free(self) -> bool:
        if self.uv is not None:
            return self.uv.phi.is_zero
        return self.phi_minus.is_zero and self.phi_plus.is_zero


def _exp_combination(params: KawasakiRateParams, e_from: float, e_to):
    """Exponential rate factor given departure/landing energies.

    In plain mode ``e_from = E^{phi-}(x)`` and ``e_to = E^{phi+}(y)``; in uv mode
    both are energies of the base potential.
    """
    if math.isinf(e_from):
        raise ConsistencyError("departure energy is infinite: overlapping hard cores")
    e_to = np.asarray(e_to, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        if params.uv is None:
            return np.exp(e_from - e_to)
        u, v = params.uv.u, params.uv.v
        a = np.exp(u * e_from - _times(1 - v, e_to))
        b = np.exp(v * e_from - _times(1 - u, e_to))
        return 0.5 * (a + b)


def _times(c: float, e):
    """``c * e`` with ``0 * inf = 0``."""
    if c == 0:
        return np.zeros(np.shape(e))
    return c * e


def departure_energy(params: KawasakiRateParams, x, gamma, exclude):
    phi = params.uv.phi if params.uv is not None else params.phi_minus
    return energy(phi, x, gamma, exclude)


def landing_energy(params: KawasakiRateParams, y, gamma, exclude):
    phi = params.uv.phi if params.uv is not None else params.phi_plus
    return energy(phi, y, gamma, exclude)


def rate_factor(params: KawasakiRateParams, x, y, gamma: Configuration,
                exclude: int | None = None) -> float:
    """The exponential part of the hopping rate (``r(x, y, gamma - x)`` in plain mode)."""
    e_from = departure_energy(params, x, gamma, exclude)
    e_to = landing_energy(params, y, gamma, exclude)
    return float(_exp_combination(params, e_from, e_to))


def kawasaki_rate(params: KawasakiRateParams, x, y, gamma: Configuration,
                  exclude: int | None = None) -> float:
    """Hopping rate density from ``x`` to ``y`` given the rest of the configuration.

    ``gamma`` may contain ``x`` under id ``exclude``; that id is ignored. The
    kernel is the periodised ``a_eps`` of the torus.
    """
    torus = gamma.torus
    disp = min_image_disp(x, y, torus)
    a = float(params.kernel.wrapped_density(disp, params.eps, torus))
    if a == 0.0:
        return 0.0
    return a * rate_factor(params, x, y, gamma, exclude)


def landing_bound_for(params: KawasakiRateParams, dim: int) -> float:
    """``M_land``: bound on the landing factor; raises if none exists."""
    if params.uv is not None:
        phi = params.uv.phi
        M = phi.landing_bound(dim)
        if M is None:
            raise ConfigurationError("potential with negative part and no hard core: "
                                     "no landing bound for thinning")
        # both addends carry exp(-(1-u) E) or exp(-(1-v) E) with factors <= 1
        return M
    M = params.phi_plus.landing_bound(dim)
    if M is None:
        raise ConfigurationError("phi_plus has a negative part and no hard core: "
                                 "no landing bound for thinning")
    return M


# ---------------------------------------------------------------------------
# admissibility checks
# ---------------------------------------------------------------------------
@dataclass
class StabilityReport:
    passed: bool
    worst_margin: float
    witness: np.ndarray | None = None
    pointwise_ok: bool = True
    trials: int = 0


def _pair_energy_sum(phi: PairPotential, eta: np.ndarray) -> float:
    if len(eta) < 2:
        return 0.0
    disp = eta[:, None, :] - eta[None, :, :]
    iu = np.triu_indices(len(eta), k=1)
    return float(np.sum(phi(disp[iu])))


def check_stability(phi: PairPotential, B: float, trials: int, rng, dim: int = 1) -> StabilityReport:
    """Randomised search for violations of ``sum_{pairs} phi >= -B |eta|``.

    Half of the trial configurations are clumped in a cube of side equal to
    the interaction range (where attractive wells bite), half are spread over
    a cube four times larger. Also checks ``phi >= -2B`` on a radial grid.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    scale = phi.range if phi.range > 0 else 1.0
    worst, witness = math.inf, None
    for i in range(trials):
        n = int(rng.integers(2, 13))
        side = scale if i % 2 == 0 else 4 * scale
        eta = rng.random((n, dim)) * side
        margin = _pair_energy_sum(phi, eta) + B * n
        if margin < worst:
            worst, witness = margin, eta
    r = np.linspace(0.0, 1.1 * scale, 4001)
    vals = phi.radial(r)
    pointwise_ok = bool(np.all(vals >= -2 * B - 1e-12))
    passed = worst >= 0 and pointwise_ok
    return StabilityReport(passed, float(worst), None if passed else witness, pointwise_ok, trials)


@dataclass
class LowActivityReport:
    holds: bool
    lhs: float
    threshold: float


def check_low_activity(phi: PairPotential, z: float, B: float | None = None,
                       dim: int = 1) -> LowActivityReport:
    """``z * int |exp(-phi) - 1| dx`` against ``(2 e^{1 + 2B})^{-1}``."""
    if not z > 0:
        raise ValueError("activity must be positive")
    if B is None:
        B = phi.stability_B_dim(dim) if hasattr(phi, "stability_B_dim") else phi.stability_B
    if math.isinf(B):
        return LowActivityReport(False, math.nan, 0.0)

    def g(r):
        with np.errstate(over="ignore"):
            return np.abs(np.exp(-phi.radial(r)) - 1.0)

    lhs = z * radial_integral(g, phi.range, dim, phi.breakpoints())
    threshold = 1.0 / (2.0 * math.exp(1.0 + 2.0 * B))
    return LowActivityReport(bool(lhs < threshold), float(lhs), threshold)


@dataclass
class Condition12Report:
    holds: bool
    value: float


def check_condition_12(phi: PairPotential, u: float, v: float, dim: int = 1) -> Condition12Report:
    """Finiteness of ``int |exp[(2 max(u, v) - 1) phi(x)] - 1| dx``.

    With a positive exponent an infinite hard core makes the integrand
    infinite on a set of positive volume; that is reported as failure.
    """
    if not (0 <= u <= 1 and 0 <= v <= 1):
        raise ValueError("u, v must lie in [0, 1]")
    c = 2 * max(u, v) - 1
    if c == 0 or phi.is_zero:
        return Condition12Report(True, 0.0)

    def g(r):
        p = phi.radial(r)
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.abs(np.exp(c * p) - 1.0)
        # c < 0: exp(-inf) = 0 inside the core
        return np.where(np.isinf(p) & (c < 0), 1.0, out)

    try:
        value = radial_integral(g, phi.range, dim, phi.breakpoints())
    except NonIntegrableError:
        return Condition12Report(False, math.inf)
    return Condition12Report(bool(np.isfinite(value)), float(value))
