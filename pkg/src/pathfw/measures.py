"""Atomic measures on paths: time slices, energy, feasibility, dedup."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .forward import ForwardModel
from .paths import GridMismatchError, KnotPath, TimeGrid, path_distance
from .transport import StepCost, path_cost

__all__ = [
    "Atom",
    "AtomicMeasure",
    "FeasibleConfig",
    "EnergyReport",
    "energy",
    "consolidate",
    "measure_to_dict",
    "measure_from_dict",
]


@dataclass(frozen=True, eq=False)
class Atom:
    """One weighted path a * delta_gamma with a >= 0."""

    weight: float
    path: KnotPath

    def __post_init__(self):
        w = float(self.weight)
        if not np.isfinite(w) or w < 0:
            raise ValueError("atom weight must be finite and >= 0")
        object.__setattr__(self, "weight", w)


@dataclass(eq=False)
class AtomicMeasure:
    """Finite nonnegative combination of weighted paths on a shared grid."""

    grid: TimeGrid
    atoms: List[Atom] = field(default_factory=list)

    def __post_init__(self):
        for atom in self.atoms:
            if not atom.path.grid.same_as(self.grid):
                raise GridMismatchError("atom grids do not match the measure grid")

    @classmethod
    def empty(cls, grid: TimeGrid) -> "AtomicMeasure":
        return cls(grid, [])

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def total_weight(self) -> float:
        return float(sum(a.weight for a in self.atoms))

    def time_slice(self, j: int) -> Tuple[np.ndarray, np.ndarray]:
        """Weighted point list (a_i h_i(t_j), x_i(t_j)); zero weights kept."""
        if not 0 <= j < self.grid.num_knots:
            raise IndexError(f"time index {j} out of range")
        if not self.atoms:
            return np.zeros(0), np.zeros((0, 2))
        w = np.array([a.weight * a.path.masses[j] for a in self.atoms])
        x = np.array([a.path.positions[j] for a in self.atoms])
        return w, x

    def measurements(self, fm: ForwardModel) -> np.ndarray:
        """Stacked measurement vectors u_j = A_j (slice at t_j)."""
        if not fm.grid.same_as(self.grid):
            raise GridMismatchError("measure and model use different time grids")
        out = np.empty_like(fm.data)
        for j in range(self.grid.num_knots):
            w, x = self.time_slice(j)
            out[j] = fm.apply(j, w, x)
        return out

    def feasibility_margin(self, cfg: "FeasibleConfig") -> float:
        """1 - phi0 * sum(a_i); nonnegative exactly on the feasible set."""
        return 1.0 - cfg.phi0 * self.total_weight

    def scaled(self, factor: float) -> "AtomicMeasure":
        return AtomicMeasure(
            self.grid, [Atom(a.weight * factor, a.path) for a in self.atoms]
        )


@dataclass(frozen=True)
class FeasibleConfig:
    """Constant extreme-point scale phi0 > 0 defining D = {phi0 mass <= 1}."""

    phi0: float = 0.1

    def __post_init__(self):
        if not self.phi0 > 0:
            raise ValueError("phi0 must be positive")

    @property
    def atom_weight(self) -> float:
        """Weight of a nonzero extreme point of D."""
        return 1.0 / self.phi0


@dataclass(frozen=True)
class EnergyReport:
    total: float
    fidelity: float
    regulariser: float
    per_atom_cost: Tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "fidelity": self.fidelity,
            "regulariser": self.regulariser,
            "per_atom_cost": list(self.per_atom_cost),
        }


def energy(m: AtomicMeasure, fm: ForwardModel, cost: StepCost) -> EnergyReport:
    """E(m) = 0.5 sum_j ||A_j m_j - b_j||^2 + sum_i a_i w(gamma_i)."""
    u = m.measurements(fm)
    fidelity = 0.5 * float(np.sum((u - fm.data) ** 2))
    per_atom = tuple(path_cost(cost, a.path) for a in m.atoms)
    reg = float(sum(a.weight * c for a, c in zip(m.atoms, per_atom)))
    return EnergyReport(fidelity + reg, fidelity, reg, per_atom)


def _merge_atoms(atoms: Sequence[Atom]) -> Atom:
    """Weight-preserving merge; positions are mass-weighted averages."""
    total = sum(a.weight for a in atoms)
    ref = atoms[0].path
    masses = sum(a.weight * a.path.masses for a in atoms) / total
    wmass = sum(
        (a.weight * a.path.masses)[:, None] * a.path.positions for a in atoms
    )
    denom = sum(a.weight * a.path.masses for a in atoms)
    plain = sum(a.weight * a.path.positions for a in atoms) / total
    with np.errstate(invalid="ignore", divide="ignore"):
        positions = np.where(denom[:, None] > 0, wmass / denom[:, None], plain)
    return Atom(total, KnotPath(ref.grid, masses, positions))


def consolidate(m: AtomicMeasure, tol: float) -> AtomicMeasure:
    """Drop zero-weight atoms and merge atoms within flat distance tol.

    Total weight is preserved.  Merging identical atoms leaves the energy
    unchanged; near-duplicates are averaged, so callers that must not
    increase the energy should compare before and after.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    alive = [a for a in m.atoms if a.weight > 0.0]
    changed = True
    while changed:
        changed = False
        merged: List[Atom] = []
        used = [False] * len(alive)
        order = sorted(range(len(alive)), key=lambda i: -alive[i].weight)
        for i in order:
            if used[i]:
                continue
            group = [alive[i]]
            used[i] = True
            for j in order:
                if used[j]:
                    continue
                if path_distance(alive[i].path, alive[j].path) <= tol:
                    group.append(alive[j])
                    used[j] = True
            merged.append(group[0] if len(group) == 1 else _merge_atoms(group))
            changed = changed or len(group) > 1
        alive = merged
    return AtomicMeasure(m.grid, alive)


def support_consolidate(
    m: AtomicMeasure, pos_tol: float, mass_floor: float = 1e-9
) -> AtomicMeasure:
    """Merge atoms that occupy the same positions wherever both carry mass.

    Unlike ``consolidate`` this ignores differences between mass profiles:
    atoms a delta_{(h, x)} and a' delta_{(h', x)} riding the same track sum
    to a single atom with the folded profile a h + a' h'.  Time slices are
    unchanged; for coincident positions the transport cost of the merged
    atom never exceeds the sum (the mass-change cost is subadditive), so
    callers guard with an energy comparison only for inexact alignment.
    """
    alive = [a for a in m.atoms if a.weight > 0.0]
    merged: List[Atom] = []
    used = [False] * len(alive)
    order = sorted(range(len(alive)), key=lambda i: -alive[i].weight)

    def compatible(a: Atom, b: Atom) -> bool:
        both = np.minimum(a.weight * a.path.masses, b.weight * b.path.masses)
        active = both > mass_floor
        if not np.any(active):
            return True
        gaps = np.linalg.norm(
            a.path.positions[active] - b.path.positions[active], axis=1
        )
        return bool(np.max(gaps) <= pos_tol)

    for i in order:
        if used[i]:
            continue
        group = [alive[i]]
        used[i] = True
        for j in order:
            if not used[j] and all(compatible(g, alive[j]) for g in group):
                group.append(alive[j])
                used[j] = True
        if len(group) == 1:
            merged.append(group[0])
            continue
        folded = sum(a.weight * a.path.masses for a in group)
        top = float(np.max(folded))
        if top <= 0.0:
            continue
        weight = max(top, 1.0)
        wpos = sum(
            (a.weight * a.path.masses)[:, None] * a.path.positions for a in group
        )
        ref = max(group, key=lambda a: a.weight).path.positions
        with np.errstate(invalid="ignore", divide="ignore"):
            positions = np.where(folded[:, None] > 0, wpos / folded[:, None], ref)
        merged.append(Atom(weight, KnotPath(m.grid, folded / weight, positions)))
    return AtomicMeasure(m.grid, merged)


# -- solution JSON ---------------------------------------------------------


def measure_to_dict(
    m: AtomicMeasure,
    phi0: Optional[float] = None,
    report: Optional[EnergyReport] = None,
) -> dict:
    d: dict = {
        "times": m.grid.times.tolist(),
        "atoms": [
            {
                "weight": a.weight,
                "knots": np.column_stack([a.path.masses, a.path.positions]).tolist(),
            }
            for a in m.atoms
        ],
    }
    if phi0 is not None:
        d["phi0"] = phi0
    if report is not None:
        d["energy"] = report.to_dict()
    return d


def measure_from_dict(d: dict, grid: Optional[TimeGrid] = None) -> AtomicMeasure:
    if grid is None:
        grid = TimeGrid(np.asarray(d["times"], dtype=float))
    atoms = []
    for rec in d["atoms"]:
        knots = np.asarray(rec["knots"], dtype=float)
        atoms.append(Atom(float(rec["weight"]), KnotPath(grid, knots[:, 0], knots[:, 1:])))
    return AtomicMeasure(grid, atoms)


def save_measure(path, m: AtomicMeasure, phi0=None, report=None) -> None:
    with open(path, "w") as fh:
        json.dump(measure_to_dict(m, phi0, report), fh)


def load_measure(path) -> AtomicMeasure:
    with open(path) as fh:
        return measure_from_dict(json.load(fh))
