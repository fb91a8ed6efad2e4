"""Periodic box geometry and finite point configurations.

A :class:`Configuration` is a simple (no repeated points) finite point set on
a cubic torus ``[0, L)^d``. Every point carries a stable integer id so event
logs can follow a particle across hops. A uniform cell grid with cells no
smaller than the registered interaction range keeps neighbourhood queries
local.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


class RangeError(ValueError):
    """Raised when a query or interaction range violates ``r <= L/2``."""


class DuplicatePointError(ValueError):
    """Raised when inserting a point that is already stored."""


@dataclass(frozen=True)
class Torus:
    """The box ``[0, side)^dim`` with periodic identification."""

    dim: int
    side: float

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if not self.side > 0:
            raise ValueError(f"side must be positive, got {self.side!r}")

    @property
    def volume(self) -> float:
        return float(self.side) ** self.dim

    def check_range(self, r: float) -> None:
        """Minimum-image validity requires interaction ranges below L/2."""
        if r >= self.side / 2:
            raise RangeError(
                f"interaction range {r} must be < L/2 = {self.side / 2} on this torus")

    def uniform(self, rng, size=None) -> np.ndarray:
        shape = (self.dim,) if size is None else (size, self.dim)
        return wrap(rng.random(shape) * self.side, self)


def wrap(p, t: Torus) -> np.ndarray:
    """Reduce coordinates modulo ``L`` into ``[0, L)``."""
    out = np.mod(np.asarray(p, dtype=float), t.side)
    # np.mod can round tiny negatives up to exactly L
    return np.where(out >= t.side, 0.0, out)


def min_image_disp(x, y, t: Torus) -> np.ndarray:
    """Shortest periodic representative of ``x - y``, each component in [-L/2, L/2).

    The tie at exactly ``L/2`` resolves to ``-L/2``. Broadcasts over leading
    axes.
    """
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    L = t.side
    return d - L * np.floor(d / L + 0.5)


def min_image_dist(x, y, t: Torus) -> np.ndarray:
    return np.sqrt(np.sum(min_image_disp(x, y, t) ** 2, axis=-1))


@dataclass(frozen=True)
class Window:
    """Axis-aligned box ``[lo, hi)`` inside the fundamental domain."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or any(b <= a for a, b in zip(lo, hi)):
            raise ValueError(f"bad window bounds {lo} {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.all((pts >= self.lo) & (pts < self.hi), axis=-1)

    def uniform(self, rng, size: int) -> np.ndarray:
        lo, hi = np.array(self.lo), np.array(self.hi)
        return lo + (hi - lo) * rng.random((size, self.dim))


class StepFunction:
    """``f(x) = value * 1_window(x)``: the test functions used throughout.

    Callable on a single point (returns float) or an ``(m, d)`` array.
    """

    def __init__(self, window: Window, value: float = 1.0):
        self.window = window
        self.value = float(value)

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        vals = np.where(self.window.contains(pts), self.value, 0.0)
        return float(vals[0]) if pts.ndim == 1 else vals

    @property
    def integral(self) -> float:
        return self.value * self.window.volume

    @property
    def max_value(self) -> float:
        return max(self.value, 0.0)

    def breakpoints(self, axis: int = 0):
        return (self.window.lo[axis], self.window.hi[axis])

    def __repr__(self):
        return f"StepFunction({self.window.lo}, {self.window.hi}, value={self.value})"


def indicator(lo, hi, value: float = 1.0) -> StepFunction:
    return StepFunction(Window(lo, hi), value)


class Configuration:
    """Finite simple point set on a torus with a cell index.

    Parameters
    ----------
    torus : Torus
    points : array-like of shape (n, d), optional
        Initial points; wrapped into the box.
    interaction_range : float, optional
        Largest range that energy queries will use. Cells have side at least
        this large so a query of radius ``r <= range`` touches only the
        ``3^d`` surrounding cells. Must be ``< L/2``.
    """

    def __init__(self, torus: Torus, points=None, interaction_range: float | None = None):
        self.torus = torus
        L = torus.side
        if interaction_range is None or interaction_range <= 0:
            interaction_range = L / 4
        torus.check_range(interaction_range)
        self.interaction_range = float(interaction_range)
        self._ncell = max(1, int(math.floor(L / interaction_range)))
        self._cell_side = L / self._ncell
        self._pos: dict[int, np.ndarray] = {}
        self._cell_of: dict[int, tuple] = {}
        self._cells: dict[tuple, set] = {}
        self._next_id = 0
        self._occupied: set = set()
        if points is not None:
            self._bulk_insert(np.asarray(points, dtype=float).reshape(-1, torus.dim))

    # -- basic protocol ----------------------------------------------------
    def __len__(self):
        return len(self._pos)

    def __contains__(self, pid):
        return pid in self._pos

    def __iter__(self):
        return iter(sorted(self._pos))

    def __repr__(self):
        return f"Configuration(n={len(self)}, torus={self.torus})"

    @property
    def ids(self) -> np.ndarray:
        return np.array(sorted(self._pos), dtype=np.int64)

    @property
    def positions(self) -> np.ndarray:
        """``(n, d)`` array of coordinates ordered by id."""
        if not self._pos:
            return np.empty((0, self.torus.dim))
        return np.array([self._pos[i] for i in sorted(self._pos)])

    def position(self, pid: int) -> np.ndarray:
        return self._pos[pid]

    def copy(self) -> "Configuration":
        new = Configuration.__new__(Configuration)
        new.torus = self.torus
        new.interaction_range = self.interaction_range
        new._ncell = self._ncell
        new._cell_side = self._cell_side
        new._pos = {k: v.copy() for k, v in self._pos.items()}
        new._cell_of = dict(self._cell_of)
        new._cells = {k: set(v) for k, v in self._cells.items()}
        new._next_id = self._next_id
        new._occupied = set(self._occupied)
        return new

    def translated(self, shift) -> "Configuration":
        """Copy with every point shifted by ``shift`` (ids preserved)."""
        new = Configuration(self.torus, interaction_range=self.interaction_range)
        for pid in sorted(self._pos):
            new._insert_with_id(wrap(self._pos[pid] + np.asarray(shift, float), self.torus), pid)
        new._next_id = self._next_id
        return new

    # -- cell index --------------------------------------------------------
    def _cell_key(self, p) -> tuple:
        c = np.floor(p / self._cell_side).astype(int) % self._ncell
        return tuple(c.tolist())

    def _bulk_insert(self, pts: np.ndarray) -> None:
        pts = wrap(pts, self.torus)
        keys = (np.floor(pts / self._cell_side).astype(int) % self._ncell).tolist()
        for p, key in zip(pts, keys):
            pt = tuple(p.tolist())
            if pt in self._occupied:
                raise DuplicatePointError(f"point {p} already present")
            self._occupied.add(pt)
            pid = self._next_id
            self._next_id += 1
            key = tuple(key)
            self._cells.setdefault(key, set()).add(pid)
            self._pos[pid] = p
            self._cell_of[pid] = key

    def _insert_with_id(self, p, pid):
        pt = tuple(p.tolist())
        if pt in self._occupied:
            raise DuplicatePointError(f"point {p} already present")
        self._occupied.add(pt)
        key = self._cell_key(p)
        self._cells.setdefault(key, set()).add(pid)
        self._pos[pid] = p
        self._cell_of[pid] = key

    def insert(self, x) -> int:
        """Add a point; returns its new id."""
        p = wrap(np.array(x, dtype=float).reshape(self.torus.dim), self.torus)
        pid = self._next_id
        self._insert_with_id(p, pid)
        self._next_id += 1
        return pid

    def remove(self, pid: int) -> np.ndarray:
        p = self._pos.pop(pid)
        self._occupied.discard(tuple(p.tolist()))
        key = self._cell_of.pop(pid)
        bucket = self._cells[key]
        bucket.discard(pid)
        if not bucket:
            del self._cells[key]
        return p

    def move(self, pid: int, y) -> None:
        """Equivalent to ``remove(pid)`` followed by insertion of ``y`` under the same id."""
        if pid not in self._pos:
            raise KeyError(pid)
        p = wrap(np.array(y, dtype=float).reshape(self.torus.dim), self.torus)
        old = self.remove(pid)
        try:
            self._insert_with_id(p, pid)
        except DuplicatePointError:
            self._insert_with_id(old, pid)
            raise

    def rebuilt_index(self) -> dict:
        cells: dict[tuple, set] = {}
        for pid, p in self._pos.items():
            cells.setdefault(self._cell_key(p), set()).add(pid)
        return cells

    def index_consistent(self) -> bool:
        """Compare the incrementally maintained index against a full rebuild."""
        occ = {tuple(p.tolist()) for p in self._pos.values()}
        return occ == self._occupied and self.rebuilt_index() == self._cells and all(
            self._cell_key(p) == self._cell_of[pid] for pid, p in self._pos.items())

    # -- queries -----------------------------------------------------------
    def candidate_ids(self, x, r: float) -> list:
        """Ids in the cells that can hold points within ``r`` of ``x`` (superset)."""
        m = int(math.ceil(r / self._cell_side))
        if 2 * m + 1 >= self._ncell:
            return list(self._pos)
        c = np.floor(np.asarray(x, float) / self._cell_side).astype(int)
        out = []
        cells = self._cells
        n = self._ncell
        if self.torus.dim == 1:
            c0 = int(c[0])
            for k in range(c0 - m, c0 + m + 1):
                b = cells.get((k % n,))
                if b:
                    out.extend(b)
            return out
        for off in itertools.product(range(-m, m + 1), repeat=self.torus.dim):
            b = cells.get(tuple(((c + off) % n).tolist()))
            if b:
                out.extend(b)
        return out

    def neighbors_within(self, x, r: float, exclude: int | None = None) -> np.ndarray:
        """Sorted ids ``y`` with ``|min_image_disp(x, y)| <= r``.

        ``x`` itself is included when stored; pass ``exclude`` to drop an id.
        """
        if r > self.torus.side / 2:
            raise RangeError(f"query radius {r} exceeds L/2 = {self.torus.side / 2}")
        cand = self.candidate_ids(x, r)
        if exclude is not None:
            cand = [i for i in cand if i != exclude]
        if not cand:
            return np.empty(0, dtype=np.int64)
        cand.sort()
        pts = np.array([self._pos[i] for i in cand])
        dist = min_image_dist(x, pts, self.torus)
        return np.asarray(cand, dtype=np.int64)[dist <= r]

    def neighbor_disps(self, x, r: float, exclude: int | None = None) -> np.ndarray:
        """Min-image displacements ``x - y`` for candidate points (id order, unfiltered)."""
        cand = self.candidate_ids(x, r)
        if exclude is not None:
            cand = [i for i in cand if i != exclude]
        if not cand:
            return np.empty((0, self.torus.dim))
        cand.sort()
        pts = np.array([self._pos[i] for i in cand])
        return min_image_disp(np.asarray(x, float), pts, self.torus)

    def count_in(self, window: Window) -> int:
        if not self._pos:
            return 0
        return int(np.count_nonzero(window.contains(self.positions)))


def sample_poisson(rho: float, t: Torus, rng, interaction_range: float | None = None) -> Configuration:
    """Homogeneous Poisson process of intensity ``rho`` on the torus."""
    if rho < 0:
        raise ValueError("intensity must be non-negative")
    n = rng.poisson(rho * t.volume)
    pts = rng.random((n, t.dim)) * t.side
    return Configuration(t, pts, interaction_range=interaction_range)
