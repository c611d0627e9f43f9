"""Per-interval transport step costs and geodesic interpolation.

Two step costs are available:

* balanced (``bb``):    alpha*dt + (beta/2) |x1-x0|^2 / dt, masses fixed at 1;
* unbalanced (``wfr``): alpha*dt*(h0+h1)/2 plus the closed-form cone cost
  (4 beta delta^2 / dt) [ (h0+h1)/2 - sqrt(h0 h1) cos(min(|x1-x0|/(2 delta), pi)) ].

Summing the step over the intervals of a path gives the path regulariser w.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .paths import ContinuousPath, KnotPath, MassPos, TimeGrid

__all__ = [
    "StepCost",
    "step",
    "step_arrays",
    "path_cost",
    "geodesic_interpolate",
    "InterpolatedPath",
]

BALANCED = "bb"
UNBALANCED = "wfr"


@dataclass(frozen=True)
class StepCost:
    """Transport step cost parameters (alpha, beta > 0; delta > 0 for wfr)."""

    kind: str
    alpha: float
    beta: float
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in (BALANCED, UNBALANCED):
            raise ValueError(f"unknown step cost kind {self.kind!r}")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        if self.kind == UNBALANCED and not self.delta > 0:
            raise ValueError("delta must be positive for the unbalanced cost")

    @classmethod
    def balanced(cls, alpha: float, beta: float) -> "StepCost":
        return cls(BALANCED, alpha, beta)

    @classmethod
    def unbalanced(cls, alpha: float, beta: float, delta: float) -> "StepCost":
        return cls(UNBALANCED, alpha, beta, delta)

    @property
    def is_balanced(self) -> bool:
        return self.kind == BALANCED


def step(cost: StepCost, a: MassPos, b: MassPos, t0: float, t1: float) -> float:
    """Transport cost of one interval between knots a at t0 and b at t1."""
    if t1 <= t0:
        raise ValueError("interval must have t1 > t0")
    dt = t1 - t0
    if cost.is_balanced:
        sq = float(np.dot(a.pos - b.pos, a.pos - b.pos))
        return cost.alpha * dt + 0.5 * cost.beta * sq / dt
    sep = float(np.linalg.norm(a.pos - b.pos))
    theta = min(sep / (2.0 * cost.delta), np.pi)
    bracket = 0.5 * (a.mass + b.mass) - np.sqrt(a.mass * b.mass) * np.cos(theta)
    return cost.alpha * dt * 0.5 * (a.mass + b.mass) + (
        4.0 * cost.beta * cost.delta**2 / dt
    ) * bracket


def step_arrays(
    cost: StepCost,
    m0: np.ndarray,
    x0: np.ndarray,
    m1: np.ndarray,
    x1: np.ndarray,
    dt: np.ndarray,
) -> np.ndarray:
    """Vectorised ``step`` over matching arrays of endpoint knots."""
    if cost.is_balanced:
        sq = np.sum((x1 - x0) ** 2, axis=-1)
        return cost.alpha * dt + 0.5 * cost.beta * sq / dt
    sep = np.linalg.norm(x1 - x0, axis=-1)
    theta = np.minimum(sep / (2.0 * cost.delta), np.pi)
    bracket = 0.5 * (m0 + m1) - np.sqrt(m0 * m1) * np.cos(theta)
    return cost.alpha * dt * 0.5 * (m0 + m1) + (
        4.0 * cost.beta * cost.delta**2 / dt
    ) * bracket


def path_cost(cost: StepCost, p: KnotPath) -> float:
    """Total regulariser w(p), the sum of the per-interval step costs."""
    if p.grid.num_intervals == 0:
        return 0.0
    vals = step_arrays(
        cost,
        p.masses[:-1],
        p.positions[:-1],
        p.masses[1:],
        p.positions[1:],
        p.grid.dt,
    )
    return float(np.sum(vals))


@dataclass(eq=False)
class InterpolatedPath(ContinuousPath):
    """Geodesic interpolation of a KnotPath, with dense samples attached."""

    times: np.ndarray = None
    masses: np.ndarray = None
    positions: np.ndarray = None


def _cone_interp(h0, h1, x0, x1, delta, s):
    """Cone geodesic between (h0, x0) and (h1, x1) at fractions s in [0,1].

    In radial coordinates r = sqrt(h) the geodesic is the straight segment
    in the unrolled cone plane, so r(s)^2 is quadratic in s and the arc
    fraction follows an arctan law.  The angle saturates at pi (the path
    then passes through the apex: mass dies at x0 and is reborn at x1).
    """
    s = np.asarray(s, dtype=float)
    if h0 <= 0.0 and h1 <= 0.0:
        return np.zeros_like(s), np.tile(x0, (s.size, 1))
    r0, r1 = np.sqrt(h0), np.sqrt(h1)
    sep = float(np.linalg.norm(x1 - x0))
    theta = min(sep / (2.0 * delta), np.pi)
    a = (1.0 - s) * r0
    b = s * r1
    mass = a * a + b * b + 2.0 * a * b * np.cos(theta)
    if sep < 1e-15 or theta < 1e-15:
        frac = s
    else:
        frac = np.arctan2(b * np.sin(theta), a + b * np.cos(theta)) / theta
    pos = x0[None, :] + frac[:, None] * (x1 - x0)[None, :]
    # exact endpoints
    mass = np.where(s == 0.0, h0, np.where(s == 1.0, h1, mass))
    pos[s == 0.0] = x0
    pos[s == 1.0] = x1
    return mass, pos


def geodesic_interpolate(
    cost: StepCost, p: KnotPath, samples_per_interval: int
) -> InterpolatedPath:
    """Reconstruct the continuous-time path through the knots.

    Balanced: positions are piecewise linear and the mass is carried over
    from the knots.  Unbalanced: each interval follows the cone geodesic
    (quadratic r(s)^2, arctan position law).  Endpoints match the knots
    exactly; refining the sampling never increases the path cost.
    """
    if samples_per_interval < 1:
        raise ValueError("samples_per_interval must be >= 1")
    grid = p.grid
    if grid.num_intervals == 0:
        times = grid.times.copy()
        masses = p.masses.copy()
        positions = p.positions.copy()
    else:
        times_out = [np.array([grid.times[0]])]
        masses_out = [p.masses[:1].copy()]
        pos_out = [p.positions[:1].copy()]
        s = np.linspace(0.0, 1.0, samples_per_interval + 1)[1:]
        for j in range(grid.num_intervals):
            t0, t1 = grid.times[j], grid.times[j + 1]
            if cost.is_balanced:
                m = (1.0 - s) * p.masses[j] + s * p.masses[j + 1]
                x = (1.0 - s)[:, None] * p.positions[j] + s[:, None] * p.positions[
                    j + 1
                ]
            else:
                m, x = _cone_interp(
                    p.masses[j],
                    p.masses[j + 1],
                    p.positions[j],
                    p.positions[j + 1],
                    cost.delta,
                    s,
                )
            times_out.append(t0 + s * (t1 - t0))
            masses_out.append(m)
            pos_out.append(x)
        times = np.concatenate(times_out)
        masses = np.concatenate(masses_out)
        positions = np.vstack(pos_out)
    times[-1] = grid.times[-1]

    knot_times = grid.times
    knot_masses = p.masses
    knot_positions = p.positions
    delta = cost.delta
    balanced = cost.is_balanced

    def mass_fn(t: float) -> float:
        m, _ = _eval_at(t)
        return m

    def pos_fn(t: float) -> np.ndarray:
        _, x = _eval_at(t)
        return x

    def _eval_at(t: float):
        t = float(min(max(t, knot_times[0]), knot_times[-1]))
        j = int(np.searchsorted(knot_times, t, side="right") - 1)
        j = min(max(j, 0), len(knot_times) - 2) if len(knot_times) > 1 else 0
        if len(knot_times) == 1:
            return float(knot_masses[0]), knot_positions[0].copy()
        t0, t1 = knot_times[j], knot_times[j + 1]
        s = (t - t0) / (t1 - t0)
        if balanced:
            m = (1.0 - s) * knot_masses[j] + s * knot_masses[j + 1]
            x = (1.0 - s) * knot_positions[j] + s * knot_positions[j + 1]
            return float(m), x
        m, x = _cone_interp(
            knot_masses[j],
            knot_masses[j + 1],
            knot_positions[j],
            knot_positions[j + 1],
            delta,
            np.array([s]),
        )
        return float(m[0]), x[0]

    return InterpolatedPath(
        mass_fn=mass_fn,
        pos_fn=pos_fn,
        times=times,
        masses=masses,
        positions=positions,
    )
