"""Ensemble estimators with standard errors.

Every estimator takes snapshots from *independent* trajectories (or
well-thinned samples) and reports a standard error computed from the
between-trajectory spread; within-trajectory averages are never used for
error bars.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._quad import ball_volume
from .config_space import Configuration, Window, min_image_dist

__all__ = [
    "EstimateWithError", "RadialHistogram", "linear_statistic", "density",
    "pair_correlation", "laplace_functional", "two_time_covariance", "window_counts",
    "poisson_gof_pvalue", "mean_estimate", "joint_z", "EstimationError",
    "covariance_estimate", "shell_k2", "shell_u2", "paired_difference",
]


class EstimationError(ValueError):
    """Degenerate input for an estimator (too few samples, empty bins, ...)."""


@dataclass(frozen=True)
class EstimateWithError:
    value: float
    se: float
    n: int

    def __post_init__(self):
        if self.se < 0 or math.isnan(self.se):
            raise ValueError(f"standard error must be >= 0, got {self.se}")

    def z_against(self, target: float) -> float:
        if self.se == 0:
            return 0.0 if self.value == target else math.copysign(math.inf, self.value - target)
        return (self.value - target) / self.se

    def __sub__(self, other: "EstimateWithError") -> "EstimateWithError":
        return EstimateWithError(self.value - other.value, math.hypot(self.se, other.se),
                                 min(self.n, other.n))

    def __str__(self):
        return f"{self.value:.6g} +/- {self.se:.2g} (n={self.n})"


def joint_z(a: EstimateWithError, b: EstimateWithError) -> float:
    """z-score of ``a - b`` for independent estimates."""
    return (a - b).z_against(0.0)


def mean_estimate(values) -> EstimateWithError:
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 0:
        raise EstimationError("empty sample")
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return EstimateWithError(float(x.mean()), se, n)


def linear_statistic(gamma, f) -> float:
    """``<f, gamma> = sum_{x in gamma} f(x)``."""
    pts = gamma.positions if isinstance(gamma, Configuration) else np.asarray(gamma, float)
    if len(pts) == 0:
        return 0.0
    return float(np.sum(f(np.atleast_2d(pts))))


def window_counts(snapshots, window: Window) -> np.ndarray:
    return np.array([s.count_in(window) for s in snapshots], dtype=np.int64)


def density(snapshots) -> EstimateWithError:
    """Mean number of points per unit volume across snapshots."""
    if len(snapshots) == 0:
        raise EstimationError("density of an empty ensemble")
    vol = snapshots[0].torus.volume
    return mean_estimate([len(s) / vol for s in snapshots])


@dataclass
class RadialHistogram:
    edges: np.ndarray
    density: EstimateWithError
    k2: np.ndarray
    k2_se: np.ndarray
    g: np.ndarray
    g_se: np.ndarray
    u2: np.ndarray
    u2_se: np.ndarray
    pair_counts: np.ndarray
    n: int

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def empty_bins(self) -> np.ndarray:
        return self.pair_counts == 0


def _shell_measure(edges: np.ndarray, dim: int) -> np.ndarray:
    vols = np.array([ball_volume(r, dim) for r in edges])
    return np.diff(vols)


def _pair_counts(gamma: Configuration, edges: np.ndarray) -> np.ndarray:
    pts = gamma.positions
    m = len(pts)
    if m < 2:
        return np.zeros(len(edges) - 1)
    iu = np.triu_indices(m, k=1)
    dist = min_image_dist(pts[iu[0]], pts[iu[1]], gamma.torus)
    h, _ = np.histogram(dist, bins=edges)
    return 2.0 * h  # ordered pairs


def _jackknife(stat, samples: np.ndarray):
    """Leave-one-out jackknife of ``stat`` applied to rows of ``samples``."""
    n = samples.shape[0]
    full = stat(samples.mean(axis=0))
    total = samples.sum(axis=0)
    loo = np.array([stat((total - samples[i]) / (n - 1)) for i in range(n)])
    se = np.sqrt((n - 1) / n * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return full, se


def pair_correlation(snapshots, r_max: float, n_bins: int = 10, edges=None) -> RadialHistogram:
    """Shell estimator of ``k^(2)(r)``, ``g(r)`` and ``u^(2)(r) = k^(2) - rho^2``.

    Per snapshot, ``k^(2)`` on a shell is (ordered pair count) /
    (volume * shell measure), unbiased for a stationary process. Errors for
    ``g`` and ``u^(2)`` come from a jackknife over snapshots.
    """
    if len(snapshots) < 2:
        raise EstimationError("pair correlation needs at least two snapshots")
    torus = snapshots[0].torus
    if r_max > torus.side / 2:
        raise EstimationError(f"r_max={r_max} exceeds L/2")
    edges = np.linspace(0.0, r_max, n_bins + 1) if edges is None else np.asarray(edges, float)
    shell = _shell_measure(edges, torus.dim)
    V = torus.volume
    counts = np.array([_pair_counts(s, edges) for s in snapshots])
    rho = np.array([len(s) / V for s in snapshots])
    k2_samples = counts / (V * shell)
    n = len(snapshots)
    k2 = k2_samples.mean(axis=0)
    k2_se = k2_samples.std(axis=0, ddof=1) / math.sqrt(n)
    rows = np.column_stack([rho, k2_samples])

    def g_stat(m):
        return m[1:] / m[0] ** 2 if m[0] > 0 else np.full(m.size - 1, np.nan)

    def u2_stat(m):
        return m[1:] - m[0] ** 2

    g, g_se = _jackknife(g_stat, rows)
    u2, u2_se = _jackknife(u2_stat, rows)
    return RadialHistogram(edges, mean_estimate(rho), k2, k2_se, g, g_se, u2, u2_se,
                           counts.sum(axis=0), n)


def laplace_functional(snapshots, f) -> EstimateWithError:
    """Mean of ``exp(<f, gamma>)`` for a non-positive test function ``f``."""
    if getattr(f, "max_value", 0.0) > 0:
        raise ValueError("Laplace functional needs f <= 0")
    vals = []
    for s in snapshots:
        pts = s.positions
        fv = f(pts) if len(pts) else np.zeros(0)
        if np.any(np.asarray(fv) > 0):
            raise ValueError("Laplace functional needs f <= 0")
        vals.append(math.exp(float(np.sum(fv))))
    return mean_estimate(vals)


def two_time_covariance(snaps0, snaps_t, f, g) -> EstimateWithError:
    """``Cov(<f, gamma_0>, <g, gamma_t>)`` across trajectories, jackknife SE."""
    n = len(snaps0)
    if n != len(snaps_t):
        raise EstimationError("snapshot lists must pair up by trajectory")
    if n < 30:
        raise EstimationError("two-time covariance needs >= 30 trajectories")
    a = np.array([linear_statistic(s, f) for s in snaps0])
    b = np.array([linear_statistic(s, g) for s in snaps_t])
    return covariance_estimate(a, b)


def covariance_estimate(a, b) -> EstimateWithError:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    n = a.size
    rows = np.column_stack([a, b, a * b])

    def cov(m):
        return np.array([(m[2] - m[0] * m[1]) * n / (n - 1)])

    val, se = _jackknife(cov, rows)
    return EstimateWithError(float(val[0]), float(se[0]), n)


def poisson_gof_pvalue(counts, mean: float, min_expected: float = 5.0) -> float:
    """Chi-square goodness of fit of integer counts to Poisson(mean).

    Categories are merged from both tails until each expected count is at
    least ``min_expected``.
    """
    counts = np.asarray(counts, dtype=np.int64)
    n = counts.size
    kmax = int(max(counts.max(initial=0), stats.poisson.ppf(1 - 1e-9, mean))) + 1
    obs = np.bincount(counts, minlength=kmax + 1)[: kmax + 1].astype(float)
    probs = stats.poisson.pmf(np.arange(kmax + 1), mean)
    probs[-1] += stats.poisson.sf(kmax, mean)
    exp_ = probs * n
    # merge bins left to right, then fold a too-small tail into its neighbour
    o_bins, e_bins = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(obs, exp_):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            o_bins.append(o_acc)
            e_bins.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if e_bins:
            o_bins[-1] += o_acc
            e_bins[-1] += e_acc
        else:
            o_bins.append(o_acc)
            e_bins.append(e_acc)
    if len(e_bins) < 2:
        return 1.0
    chi2 = float(np.sum((np.array(o_bins) - np.array(e_bins)) ** 2 / np.array(e_bins)))
    return float(stats.chi2.sf(chi2, len(e_bins) - 1))


def shell_k2(gamma: Configuration, edges) -> np.ndarray:
    """Per-snapshot shell estimate of ``k^(2)`` (ordered pairs / (volume * shell))."""
    edges = np.asarray(edges, float)
    shell = _shell_measure(edges, gamma.torus.dim)
    return _pair_counts(gamma, edges) / (gamma.torus.volume * shell)


def shell_u2(gamma: Configuration, edges) -> np.ndarray:
    """Per-snapshot ``k^(2)`` shell estimate minus ``n(n-1)/V^2``."""
    V = gamma.torus.volume
    n = len(gamma)
    return shell_k2(gamma, edges) - n * (n - 1) / V ** 2


def paired_difference(first, second) -> EstimateWithError:
    """Mean of per-unit differences ``first - second`` (rows are independent units)."""
    a = np.asarray(first, float)
    b = np.asarray(second, float)
    if a.shape != b.shape:
        raise EstimationError("paired samples must have equal shapes")
    return mean_estimate(a - b)
