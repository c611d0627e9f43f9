"""Time-indexed linear measurement operators and their dual fields.

Each observation time t_j carries m smoothed Fourier samples of the spatial
slice: for a frequency k the kernel row is

    a_k(x) = e^{-sigma_w^2 |k|^2 / 2} (cos(2 pi k.x), -sin(2 pi k.x)),

stored real/imag interleaved, so measurement vectors have length 2m.  The
dual field eta_j(x) = <residual_j, row(x)> is an analytic trigonometric sum
evaluated exactly wherever needed (no grid interpolation).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .paths import TimeGrid

__all__ = [
    "FrequencySet",
    "ForwardModel",
    "GradientField",
    "integer_frequency_grid",
]

SCHEDULES = ("all", "rotate")


def integer_frequency_grid(kmax: int, dim: int = 2) -> np.ndarray:
    """All integer frequencies in {-K..K}^d, keeping one of each +-k pair.

    Real measures make k and -k redundant; we keep the zero frequency plus
    every k whose first nonzero coordinate is positive, in lexicographic
    order (zero first).
    """
    if kmax < 0:
        raise ValueError("kmax must be >= 0")
    axes = [np.arange(-kmax, kmax + 1)] * dim
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    keep = []
    for k in grid:
        nz = k[k != 0]
        if nz.size == 0 or nz[0] > 0:
            keep.append(k)
    keep = np.array(sorted(keep, key=tuple), dtype=float)
    zero = np.all(keep == 0, axis=1)
    return np.vstack([keep[zero], keep[~zero]])


@dataclass(frozen=True, eq=False)
class FrequencySet:
    """Per-time frequency vectors; the count m is the same at every time.

    ``base`` holds the full list; ``active`` gives the indices used at each
    time.  The "all" schedule keeps everything; "rotate" keeps the zero
    frequency plus a half-window of the non-zero frequencies, ordered by
    angle, whose offset advances with the time index.
    """

    base: np.ndarray
    active: Tuple[np.ndarray, ...]
    schedule: str = "all"

    def __post_init__(self):
        base = np.ascontiguousarray(self.base, dtype=float)
        if base.ndim != 2:
            raise ValueError("base frequencies must have shape (m, d)")
        counts = {len(a) for a in self.active}
        if len(counts) != 1:
            raise ValueError("every time index must keep the same number of frequencies")
        object.__setattr__(self, "base", base)
        object.__setattr__(
            self, "active", tuple(np.asarray(a, dtype=int) for a in self.active)
        )

    @classmethod
    def make(
        cls, base: np.ndarray, n_times: int, schedule: str = "all"
    ) -> "FrequencySet":
        base = np.ascontiguousarray(base, dtype=float)
        if schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        m = base.shape[0]
        if schedule == "all":
            active = tuple(np.arange(m) for _ in range(n_times))
            return cls(base, active, schedule)
        if base.shape[1] != 2:
            raise ValueError("the rotate schedule is defined for d = 2")
        nonzero = np.where(np.any(base != 0, axis=1))[0]
        zero = np.where(np.all(base == 0, axis=1))[0]
        n_nz = nonzero.size
        if n_nz == 0:
            return cls(base, tuple(np.arange(m) for _ in range(n_times)), schedule)
        angles = np.arctan2(base[nonzero, 1], base[nonzero, 0])
        order = nonzero[np.argsort(angles, kind="stable")]
        width = max(1, n_nz // 2)
        active = []
        for j in range(n_times):
            offset = int(round(j * n_nz / max(n_times, 1))) % n_nz
            window = order[(offset + np.arange(width)) % n_nz]
            active.append(np.concatenate([zero, window]))
        return cls(base, tuple(active), schedule)

    @property
    def m(self) -> int:
        return len(self.active[0])

    @property
    def n_times(self) -> int:
        return len(self.active)

    def at(self, j: int) -> np.ndarray:
        return self.base[self.active[j]]


@dataclass(eq=False)
class GradientField:
    """One dual field eta_j, an analytic trigonometric sum.

    Built from a coefficient vector (typically the residual A_j rho - b_j);
    evaluation and spatial gradients are exact.
    """

    freqs: np.ndarray     # (m, d)
    damping: np.ndarray   # (m,)
    coeffs: np.ndarray    # (2m,) interleaved re/im

    def __post_init__(self):
        self._cr = self.coeffs[0::2] * self.damping
        self._ci = self.coeffs[1::2] * self.damping

    def values(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        phase = 2.0 * np.pi * (points @ self.freqs.T)
        return np.cos(phase) @ self._cr - np.sin(phase) @ self._ci

    def value(self, x: np.ndarray) -> float:
        return float(self.values(np.asarray(x, dtype=float)[None, :])[0])

    def gradients(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        phase = 2.0 * np.pi * (points @ self.freqs.T)
        coef = -np.sin(phase) * self._cr - np.cos(phase) * self._ci
        return coef @ (2.0 * np.pi * self.freqs)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.gradients(np.asarray(x, dtype=float)[None, :])[0]


@dataclass(eq=False)
class ForwardModel:
    """Measurement operators A_j plus observed data b_j.

    ``data`` has one row of length 2m per observation time.  ``apply`` and
    ``eta`` are pure; the model is immutable after construction.
    """

    grid: TimeGrid
    freqs: FrequencySet
    window_sigma: float
    data: np.ndarray
    noise_level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.window_sigma < 0:
            raise ValueError("window_sigma must be >= 0")
        if self.freqs.n_times != self.grid.num_knots:
            raise ValueError("frequency schedule and time grid disagree")
        data = np.ascontiguousarray(self.data, dtype=float)
        if data.shape != (self.grid.num_knots, 2 * self.freqs.m):
            raise ValueError(
                f"data must have shape ({self.grid.num_knots}, {2 * self.freqs.m})"
            )
        object.__setattr__(self, "data", data)
        self._damping = [
            np.exp(-0.5 * self.window_sigma**2 * np.sum(self.freqs.at(j) ** 2, axis=1))
            for j in range(self.grid.num_knots)
        ]

    @classmethod
    def template(
        cls,
        grid: TimeGrid,
        kmax: int = 3,
        window_sigma: float = 0.3,
        schedule: str = "all",
        dim: int = 2,
    ) -> "ForwardModel":
        """Model with zero data, ready for synthesis."""
        base = integer_frequency_grid(kmax, dim)
        freqs = FrequencySet.make(base, grid.num_knots, schedule)
        data = np.zeros((grid.num_knots, 2 * freqs.m))
        return cls(grid, freqs, window_sigma, data)

    @property
    def m(self) -> int:
        return self.freqs.m

    def kernel_matrix(self, j: int, points: np.ndarray) -> np.ndarray:
        """Rows of A_j at the given points, shape (n, 2m), re/im interleaved."""
        points = np.atleast_2d(points)
        phase = 2.0 * np.pi * (points @ self.freqs.at(j).T)
        out = np.empty((points.shape[0], 2 * self.m))
        out[:, 0::2] = np.cos(phase) * self._damping[j]
        out[:, 1::2] = -np.sin(phase) * self._damping[j]
        return out

    def apply(self, j: int, weights: np.ndarray, points: np.ndarray) -> np.ndarray:
        """A_j applied to the weighted point list; linear in the weights."""
        weights = np.asarray(weights, dtype=float)
        if weights.size == 0:
            return np.zeros(2 * self.m)
        return weights @ self.kernel_matrix(j, points)

    def field(self, j: int, coeffs: np.ndarray) -> GradientField:
        return GradientField(self.freqs.at(j), self._damping[j], np.asarray(coeffs, float))

    def eta(self, slice_values: np.ndarray) -> Tuple[List[GradientField], float]:
        """Dual fields of the residuals u_j - b_j and the fidelity value.

        ``slice_values`` stacks the measurement vectors u_j = A_j (slice j),
        one row per time.  Returns ([eta_j], 0.5 sum_j ||u_j - b_j||^2).
        """
        slice_values = np.asarray(slice_values, dtype=float)
        residual = slice_values - self.data
        fields = [self.field(j, residual[j]) for j in range(self.grid.num_knots)]
        fidelity = 0.5 * float(np.sum(residual**2))
        return fields, fidelity

    # -- data file (JSON) -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "times": self.grid.times.tolist(),
            "frequencies": [[float(v) for v in k] for k in self.freqs.base],
            "window_sigma": self.window_sigma,
            "schedule": self.freqs.schedule,
            "data": [row.tolist() for row in self.data],
            "noise_level": self.noise_level,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForwardModel":
        grid = TimeGrid(np.asarray(d["times"], dtype=float))
        base = np.asarray(d["frequencies"], dtype=float)
        freqs = FrequencySet.make(base, grid.num_knots, d.get("schedule", "all"))
        return cls(
            grid,
            freqs,
            float(d["window_sigma"]),
            np.asarray(d["data"], dtype=float),
            noise_level=float(d.get("noise_level", 0.0)),
            seed=int(d.get("seed", 0)),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "ForwardModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
