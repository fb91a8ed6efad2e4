"""Quadrature helpers shared by the potentials, harmonic and dynamics modules."""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special


class NonIntegrableError(ValueError):
    """The integrand is infinite on a set of positive measure or diverges."""


_GL_CACHE: dict[int, tuple] = {}


def gauss_legendre(order: int):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere in R^dim (2 for dim=1)."""
    return 2 * math.pi ** (dim / 2) / special.gamma(dim / 2)


def ball_volume(radius: float, dim: int) -> float:
    return math.pi ** (dim / 2) / special.gamma(dim / 2 + 1) * radius ** dim


def radial_integral(g, R: float, dim: int, points=(), epsabs: float = 1e-12) -> float:
    """Integrate a radial function ``g(|x|)`` over the ball of radius ``R`` in R^dim."""
    if R <= 0:
        return 0.0
    pts = sorted(p for p in set(points) if 0 < p < R)
    edges = [0.0, *pts, R]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        probe = g(np.linspace(a, b, 9)[1:-1])
        if not np.all(np.isfinite(probe)):
            raise NonIntegrableError(f"integrand not finite on ({a}, {b})")
        val, _ = integrate.quad(lambda r: float(g(np.array([r]))[0]) * r ** (dim - 1), a, b,
                                epsabs=epsabs, epsrel=1e-12, limit=200)
        total += val
    return sphere_area(dim) * total


def composite_nodes(a: float, b: float, breakpoints=(), max_len: float = np.inf, order: int = 8):
    """Composite Gauss-Legendre nodes/weights on [a, b] split at ``breakpoints``.

    Pieces longer than ``max_len`` are subdivided evenly.
    """
    cuts = np.unique(np.concatenate([[a, b], np.asarray(breakpoints, float)]))
    cuts = cuts[(cuts >= a) & (cuts <= b)]
    lefts, rights = cuts[:-1], cuts[1:]
    if np.isfinite(max_len):
        n_sub = np.maximum(1, np.ceil((rights - lefts) / max_len).astype(int))
        if np.any(n_sub > 1):
            pieces = [np.linspace(l, r, k + 1) for l, r, k in zip(lefts, rights, n_sub)]
            edges = np.unique(np.concatenate(pieces))
            lefts, rights = edges[:-1], edges[1:]
    x, w = gauss_legendre(order)
    half = 0.5 * (rights - lefts)
    mid = 0.5 * (rights + lefts)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights
