"""Discrete weighted paths and the flat metric on mass-position pairs.

A weighted path carries a mass h(t) in addition to a position gamma(t) in
the closed box Omega = [0, 1]^d.  The solver only ever sees paths sampled
at the observation times, stored as ``KnotPath``.  Ground-truth curves are
``ContinuousPath`` objects (plain callables) that get sampled onto a grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

__all__ = [
    "GridMismatchError",
    "TimeGrid",
    "MassPos",
    "KnotPath",
    "ContinuousPath",
    "flat_metric",
    "path_distance",
    "sample_phantom_path",
]

# Positions may stray outside [0,1]^d by at most this much (float noise).
POSITION_TOL = 1e-9
# Solver-side masses live in [0,1]; ground-truth phantoms may reach 2.
MASS_CAP = 2.0


class GridMismatchError(ValueError):
    """Two paths (or a path and a model) use incompatible time grids."""


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Sample times 0 = t_0 < ... < t_T = 1.

    A single-knot grid (T = 0) is allowed for degenerate instances; the
    0/1 endpoint convention is only enforced when there are two or more
    times.
    """

    times: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise ValueError("time grid must be a non-empty 1-d sequence")
        if t.size >= 2:
            if not (abs(t[0]) == 0.0 and t[-1] == 1.0):
                raise ValueError("time grid must run from 0 to 1")
            if not np.all(np.diff(t) > 0):
                raise ValueError("times must be strictly increasing")
        elif not (0.0 <= t[0] <= 1.0):
            raise ValueError("single sample time must lie in [0, 1]")
        t.flags.writeable = False
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, num_intervals: int) -> "TimeGrid":
        """Uniform grid t_j = j / T with T = num_intervals."""
        if num_intervals < 0:
            raise ValueError("num_intervals must be >= 0")
        if num_intervals == 0:
            return cls(np.array([0.0]))
        return cls(np.linspace(0.0, 1.0, num_intervals + 1))

    @property
    def num_knots(self) -> int:
        return self.times.size

    @property
    def num_intervals(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    def same_as(self, other: "TimeGrid") -> bool:
        return self is other or np.array_equal(self.times, other.times)


@dataclass(frozen=True, eq=False)
class MassPos:
    """A single knot value (h, x) with x in [0, 1]^d.

    ``flat_metric`` accepts masses anywhere in [-1, 1]; solver iterates
    keep h in [0, 1].
    """

    mass: float
    pos: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mass", float(self.mass))
        p = np.ascontiguousarray(self.pos, dtype=float)
        if p.ndim != 1:
            raise ValueError("position must be a 1-d point")
        object.__setattr__(self, "pos", p)


def _check_positions(positions: np.ndarray) -> np.ndarray:
    if np.any(positions < -POSITION_TOL) or np.any(positions > 1.0 + POSITION_TOL):
        raise ValueError("positions must lie in [0, 1]^d")
    return np.clip(positions, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class KnotPath:
    """A weighted path sampled at the grid times: T+1 knots (h_j, x_j)."""

    grid: TimeGrid
    masses: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(self.masses, dtype=float)
        x = np.ascontiguousarray(self.positions, dtype=float)
        n = self.grid.num_knots
        if m.shape != (n,):
            raise ValueError(f"expected {n} masses, got shape {m.shape}")
        if x.ndim != 2 or x.shape[0] != n:
            raise ValueError("positions must have shape (T+1, d)")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(x))):
            raise ValueError("path contains non-finite values")
        if np.any(m < -POSITION_TOL) or np.any(m > MASS_CAP + POSITION_TOL):
            raise ValueError(f"masses must lie in [0, {MASS_CAP}]")
        m = np.clip(m, 0.0, MASS_CAP)
        x = _check_positions(x)
        m.flags.writeable = False
        x.flags.writeable = False
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "positions", x)

    @classmethod
    def from_knots(cls, grid: TimeGrid, knots: Sequence[MassPos]) -> "KnotPath":
        masses = np.array([k.mass for k in knots])
        positions = np.array([k.pos for k in knots])
        return cls(grid, masses, positions)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def knot(self, j: int) -> MassPos:
        return MassPos(self.masses[j], self.positions[j])

    @property
    def knots(self) -> List[MassPos]:
        return [self.knot(j) for j in range(self.grid.num_knots)]

    def with_values(self, masses: np.ndarray, positions: np.ndarray) -> "KnotPath":
        return KnotPath(self.grid, masses, positions)


@dataclass(eq=False)
class ContinuousPath:
    """A weighted curve given by callables t -> h(t) and t -> x(t) on [0, 1]."""

    mass_fn: Callable[[float], float]
    pos_fn: Callable[[float], np.ndarray]


def flat_metric(a: MassPos, b: MassPos) -> float:
    """Flat distance between two mass-position pairs.

    Equals |r1| + |r2| when the masses have opposite signs or the points
    are at least 2 apart, and |r1 - r2| + min(|r1|, |r2|) |x1 - x2|
    otherwise.  Agrees with the supremum over test pairs (c1, c2) with
    |c1|, |c2| <= 1 and |c1 - c2| <= |x1 - x2|.
    """
    r1, r2 = a.mass, b.mass
    if r1 * r2 <= 0.0:
        return abs(r1) + abs(r2)
    sep = float(np.linalg.norm(a.pos - b.pos))
    if sep >= 2.0:
        return abs(r1) + abs(r2)
    return abs(r1 - r2) + min(abs(r1), abs(r2)) * sep


def _flat_metric_arrays(
    m1: np.ndarray, x1: np.ndarray, m2: np.ndarray, x2: np.ndarray
) -> np.ndarray:
    sep = np.linalg.norm(x1 - x2, axis=-1)
    far = (m1 * m2 <= 0.0) | (sep >= 2.0)
    near = np.abs(m1 - m2) + np.minimum(np.abs(m1), np.abs(m2)) * sep
    return np.where(far, np.abs(m1) + np.abs(m2), near)


def path_distance(p: KnotPath, q: KnotPath) -> float:
    """Max over knots of the flat distance; requires a common grid."""
    if not p.grid.same_as(q.grid):
        raise GridMismatchError("paths are discretised on different time grids")
    return float(
        np.max(_flat_metric_arrays(p.masses, p.positions, q.masses, q.positions))
    )


def sample_phantom_path(path: ContinuousPath, grid: TimeGrid) -> KnotPath:
    """Evaluate a continuous ground-truth curve at the grid times.

    Masses within 1e-12 of the [0, MASS_CAP] bounds are snapped onto the
    bound; positions must stay inside the closed box up to POSITION_TOL.
    """
    masses = np.empty(grid.num_knots)
    positions = None
    for j, t in enumerate(grid.times):
        h = float(path.mass_fn(t))
        x = np.asarray(path.pos_fn(t), dtype=float)
        if positions is None:
            positions = np.empty((grid.num_knots, x.size))
        if h < -1e-12 or h > MASS_CAP + 1e-12:
            raise ValueError(f"phantom mass {h} at t={t} outside [0, {MASS_CAP}]")
        masses[j] = min(max(h, 0.0), MASS_CAP)
        if np.any(x < -POSITION_TOL) or np.any(x > 1.0 + POSITION_TOL):
            raise ValueError(f"phantom position {x} at t={t} outside the domain")
        positions[j] = x
    return KnotPath(grid, masses, positions)
