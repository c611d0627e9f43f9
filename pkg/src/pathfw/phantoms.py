"""Synthetic ground-truth measures and forward data synthesis.

Phantom 1 (balanced) is the two crossing diagonal tracks; its unbalanced
variant carries the masses h0(t) = (1 + 3 t^2)/2 and h1(t) = 1.5 sqrt(1-t),
both normalised to unit time integral.  Phantom 2 has three crossing
trajectories inside [0.1, 0.9]^2; its exact curves are our own fixed
choice, documented in the README.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .forward import ForwardModel
from .measures import Atom, AtomicMeasure
from .paths import ContinuousPath, TimeGrid, sample_phantom_path

__all__ = ["Phantom", "make_phantom", "synthesize_data", "ground_truth_measure"]

PHANTOM_NAMES = ("balanced1", "balanced2", "unbalanced1", "unbalanced2")


@dataclass(frozen=True, eq=False)
class Phantom:
    name: str
    atoms: Tuple[Tuple[float, ContinuousPath], ...]


def _unit_mass(t: float) -> float:
    return 1.0


def _diag_up(t):
    return np.array([0.2 + 0.6 * t, 0.2 + 0.6 * t])


def _diag_down(t):
    return np.array([0.8 - 0.6 * t, 0.2 + 0.6 * t])


def _mass_growing(t: float) -> float:
    return 0.5 * (1.0 + 3.0 * t * t)


def _mass_fading(t: float) -> float:
    return 1.5 * np.sqrt(max(1.0 - t, 0.0))


# Phantom 2: three crossing piecewise-smooth tracks in [0.1, 0.9]^2.
def _p2_diag(t):
    return np.array([0.1 + 0.8 * t, 0.1 + 0.8 * t])


def _p2_anti(t):
    return np.array([0.9 - 0.8 * t, 0.1 + 0.8 * t])


def _p2_snake(t):
    return np.array([0.5 + 0.3 * np.sin(2.0 * np.pi * t), 0.2 + 0.6 * t])


def _mass_wave(t: float) -> float:
    return 1.0 + 0.8 * np.cos(2.0 * np.pi * t)


def make_phantom(name: str) -> Phantom:
    """Build one of the four named phantoms."""
    if name == "balanced1":
        atoms = (
            (1.0, ContinuousPath(_unit_mass, _diag_up)),
            (1.0, ContinuousPath(_unit_mass, _diag_down)),
        )
    elif name == "unbalanced1":
        atoms = (
            (1.0, ContinuousPath(_mass_growing, _diag_up)),
            (1.0, ContinuousPath(_mass_fading, _diag_down)),
        )
    elif name == "balanced2":
        atoms = (
            (1.0, ContinuousPath(_unit_mass, _p2_diag)),
            (1.0, ContinuousPath(_unit_mass, _p2_anti)),
            (1.0, ContinuousPath(_unit_mass, _p2_snake)),
        )
    elif name == "unbalanced2":
        atoms = (
            (1.0, ContinuousPath(_mass_growing, _p2_diag)),
            (1.0, ContinuousPath(_mass_fading, _p2_anti)),
            (1.0, ContinuousPath(_mass_wave, _p2_snake)),
        )
    else:
        raise ValueError(f"unknown phantom {name!r}; choose from {PHANTOM_NAMES}")
    return Phantom(name, atoms)


def ground_truth_measure(phantom: Phantom, grid: TimeGrid) -> AtomicMeasure:
    """Sample the phantom onto the grid as an atomic measure.

    Phantom masses may exceed the solver's [0, 1] knot range (up to 2);
    the excess is moved into the atom weight, so an atom of weight 2 with
    profile h/2 represents mass profile h.  Time slices are unchanged.
    """
    atoms = []
    for weight, curve in phantom.atoms:
        path = sample_phantom_path(curve, grid)
        scale = max(1.0, float(np.max(path.masses)))
        if scale > 1.0:
            path = path.with_values(path.masses / scale, path.positions)
        atoms.append(Atom(weight * scale, path))
    return AtomicMeasure(grid, atoms)


def phantom_slices(phantom: Phantom, grid: TimeGrid):
    """Weighted point lists (a_i h_i(t_j), x_i(t_j)) at every grid time."""
    weights = np.empty((grid.num_knots, len(phantom.atoms)))
    points = np.empty((grid.num_knots, len(phantom.atoms), 2))
    for i, (a, curve) in enumerate(phantom.atoms):
        for j, t in enumerate(grid.times):
            weights[j, i] = a * float(curve.mass_fn(t))
            points[j, i] = np.asarray(curve.pos_fn(t), dtype=float)
    return weights, points


def synthesize_data(
    phantom: Phantom,
    template: ForwardModel,
    noise_level: float,
    seed: int,
) -> ForwardModel:
    """Measure the phantom with the template's operators and add noise.

    Gaussian noise is scaled globally so that ||b - b_clean|| equals
    noise_level * ||b_clean|| exactly; the draw is deterministic per seed.
    """
    if noise_level < 0:
        raise ValueError("noise_level must be >= 0")
    grid = template.grid
    weights, points = phantom_slices(phantom, grid)
    clean = np.vstack(
        [template.apply(j, weights[j], points[j]) for j in range(grid.num_knots)]
    )
    data = clean
    if noise_level > 0:
        rng = np.random.default_rng(seed)
        g = rng.standard_normal(clean.shape)
        gnorm = np.linalg.norm(g)
        if gnorm > 0:
            data = clean + g * (noise_level * np.linalg.norm(clean) / gnorm)
    return ForwardModel(
        grid,
        template.freqs,
        template.window_sigma,
        data,
        noise_level=noise_level,
        seed=seed,
    )
