"""Inexact sliding Frank-Wolfe over measures on paths.

One outer iteration: linearise the fidelity at the current iterate, run the
DAG oracle over a fresh mesh, slide the k best oracle paths on the
linearised energy, insert each with an exact line search (extreme-point
weight 1/phi0 scaled by the step), then slide the whole measure on the
exact energy and re-optimise the atom weights.  Uniform meshes double their
resolution whenever the energy stalls and stop once it would exceed the
configured resolution; random meshes run for a fixed iteration budget.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .forward import ForwardModel, GradientField
from .localopt import BoxProblem, minimize
from .measures import (
    Atom,
    AtomicMeasure,
    EnergyReport,
    FeasibleConfig,
    consolidate,
    energy,
    support_consolidate,
)
from .oracle import Mesh, OracleResult, dp_shortest_paths, random_mesh, uniform_mesh
from .paths import MASS_CAP, KnotPath, TimeGrid
from .transport import StepCost, path_cost

__all__ = [
    "SolverConfig",
    "IterationRecord",
    "StopReason",
    "SolveResult",
    "LinearizedEnergy",
    "linearize",
    "slide_linearized",
    "line_search",
    "slide_exact",
    "dual_gap",
    "solve",
    "records_to_csv",
]

UNIFORM = "uniform"
RANDOM = "random"

CSV_HEADER = "iter,energy,fidelity,regulariser,gap,atoms,mesh_N,time_ms"


@dataclass
class SolverConfig:
    """Mesh strategy, cost, and tolerances for one reconstruction run."""

    cost: StepCost
    phi0: float = 0.1
    mesh_kind: str = UNIFORM
    k: int = 1
    mesh_n: int = 64          # spatial resolution N (points per axis)
    mesh_m: int = 0           # mass levels M (0 keeps the balanced mass 1)
    seed: int = 0
    max_iters: int = 100
    gap_tol: Optional[float] = None
    vmax: Optional[float] = None
    stall_rtol: float = 1e-10
    dedup_tol: float = 1e-6
    slide_max_iter: int = 2000
    slide_gtol: float = 1e-8
    uniform_start: int = 16

    def __post_init__(self):
        if self.mesh_kind not in (UNIFORM, RANDOM):
            raise ValueError("mesh_kind must be 'uniform' or 'random'")
        if self.k < 1 or self.mesh_n < 1 or self.mesh_m < 0:
            raise ValueError("need k >= 1, N >= 1, M >= 0")
        if not self.phi0 > 0:
            raise ValueError("phi0 must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.cost.is_balanced:
            self.mesh_m = 0  # balanced problems keep mass fixed at 1

    @property
    def feasible(self) -> FeasibleConfig:
        return FeasibleConfig(self.phi0)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    energy: float
    fidelity: float
    regulariser: float
    gap: float
    atoms: int
    mesh_n: int
    time_ms: float


@dataclass(frozen=True)
class StopReason:
    kind: str
    threshold: Optional[float] = None

    UNIFORM_CONVERGED = "uniform_converged"
    MAX_ITERS = "max_iters"
    GAP_BELOW = "gap_below"

    @classmethod
    def uniform_converged(cls) -> "StopReason":
        return cls(cls.UNIFORM_CONVERGED)

    @classmethod
    def max_iters(cls) -> "StopReason":
        return cls(cls.MAX_ITERS)

    @classmethod
    def gap_below(cls, eps: float) -> "StopReason":
        return cls(cls.GAP_BELOW, eps)


@dataclass(frozen=True)
class SolveResult:
    measure: AtomicMeasure
    records: Tuple[IterationRecord, ...]
    stop: StopReason
    report: EnergyReport


# --------------------------------------------------------------------------
# linearisation
# --------------------------------------------------------------------------


@dataclass(eq=False)
class LinearizedEnergy:
    """Dual fields eta_j of the current residual plus the Etilde evaluator."""

    fields: List[GradientField]
    fidelity: float
    cost: StepCost
    grid: TimeGrid

    def node_values(self, path: KnotPath) -> np.ndarray:
        return np.array(
            [
                path.masses[j] * self.fields[j].value(path.positions[j])
                for j in range(self.grid.num_knots)
            ]
        )

    def path_value(self, path: KnotPath) -> float:
        """Etilde(path) = sum_j h_j eta_j(x_j) + w(path)."""
        return float(np.sum(self.node_values(path))) + path_cost(self.cost, path)


def linearize(m: AtomicMeasure, fm: ForwardModel, cost: StepCost) -> LinearizedEnergy:
    """Dual fields at the current iterate: eta_j = A_j*(A_j m_j - b_j)."""
    fields, fidelity = fm.eta(m.measurements(fm))
    return LinearizedEnergy(fields, fidelity, cost, fm.grid)


# --------------------------------------------------------------------------
# step-cost derivatives in the (sqrt-mass, position) variables
# --------------------------------------------------------------------------


def _step_terms(cost: StepCost, q: np.ndarray, x: np.ndarray, dt: np.ndarray):
    """Regulariser value and gradients for one path, variables (q, x), h = q^2."""
    dq = np.zeros_like(q)
    dx = np.zeros_like(x)
    diff = x[1:] - x[:-1]
    if cost.is_balanced:
        sq = np.sum(diff**2, axis=1)
        value = float(np.sum(cost.alpha * dt + 0.5 * cost.beta * sq / dt))
        pull = cost.beta * diff / dt[:, None]
        dx[1:] += pull
        dx[:-1] -= pull
        return value, dq, dx
    q0, q1 = q[:-1], q[1:]
    sep = np.linalg.norm(diff, axis=1)
    theta = np.minimum(sep / (2.0 * cost.delta), np.pi)
    scale = 4.0 * cost.beta * cost.delta**2 / dt
    half = 0.5 * (q0**2 + q1**2)
    value = float(
        np.sum(cost.alpha * dt * half + scale * (half - q0 * q1 * np.cos(theta)))
    )
    cosr = np.cos(theta)
    dq[:-1] += cost.alpha * dt * q0 + scale * (q0 - q1 * cosr)
    dq[1:] += cost.alpha * dt * q1 + scale * (q1 - q0 * cosr)
    clamped = sep >= 2.0 * cost.delta * np.pi
    tiny = sep < 1e-14
    with np.errstate(invalid="ignore", divide="ignore"):
        sos = np.where(tiny, 1.0 / (2.0 * cost.delta), np.sin(theta) / sep)
    sos = np.where(clamped, 0.0, sos)
    pull = (scale * q0 * q1 * sos / (2.0 * cost.delta))[:, None] * diff
    dx[1:] += pull
    dx[:-1] -= pull
    return value, dq, dx


# --------------------------------------------------------------------------
# sliding on the linearised energy (one path)
# --------------------------------------------------------------------------


def _pack_path(path: KnotPath, balanced: bool) -> np.ndarray:
    if balanced:
        return path.positions.ravel().copy()
    return np.concatenate([np.sqrt(path.masses), path.positions.ravel()])


def _unpack_path(z: np.ndarray, path: KnotPath, balanced: bool):
    n = path.grid.num_knots
    if balanced:
        return path.masses, z.reshape(n, path.dim)
    q = z[:n]
    return q**2, z[n:].reshape(n, path.dim)


def linearized_objective(
    candidate: KnotPath, lin: LinearizedEnergy
) -> Tuple[BoxProblem, np.ndarray, Callable[[np.ndarray], KnotPath]]:
    """Etilde as a box-constrained objective over (sqrt h, x) knots.

    The mass coordinate is dropped for the balanced cost (mass is pinned
    by the mesh).
    """
    balanced = lin.cost.is_balanced
    n = candidate.grid.num_knots
    dt = candidate.grid.dt
    dim = candidate.dim
    base_masses = candidate.masses

    def objective(z: np.ndarray):
        masses, x = _unpack_path(z, candidate, balanced)
        q = None if balanced else z[:n]
        vals = np.array([lin.fields[j].value(x[j]) for j in range(n)])
        grads = np.array([lin.fields[j].gradient(x[j]) for j in range(n)])
        value = float(np.sum(masses * vals))
        dx = masses[:, None] * grads
        if balanced:
            dq = None
        else:
            dq = 2.0 * q * vals
        if n > 1:
            wval, wdq, wdx = _step_terms(lin.cost, np.sqrt(masses), x, dt)
            value += wval
            dx = dx + wdx
            if not balanced:
                dq = dq + wdq
        grad = dx.ravel() if balanced else np.concatenate([dq, dx.ravel()])
        return value, grad

    x0 = _pack_path(candidate, balanced)
    lower = np.zeros_like(x0)
    upper = np.ones_like(x0)
    problem = BoxProblem(lower, upper, objective)

    def rebuild(z: np.ndarray) -> KnotPath:
        masses, x = _unpack_path(z, candidate, balanced)
        return KnotPath(candidate.grid, base_masses if balanced else masses, x)

    return problem, x0, rebuild


def slide_linearized(
    candidate: KnotPath,
    lin: LinearizedEnergy,
    max_iter: int = 200,
    gtol: float = 1e-8,
) -> Tuple[KnotPath, float]:
    """Local descent of Etilde from a mesh path; never returns a worse path."""
    problem, x0, rebuild = linearized_objective(candidate, lin)
    z, value = minimize(problem, x0, max_iter=max_iter, gtol=gtol)
    start = lin.path_value(candidate)
    if value <= start:
        return rebuild(z), float(value)
    return candidate, float(start)


# --------------------------------------------------------------------------
# exact line search
# --------------------------------------------------------------------------


def _line_search_core(
    num: float, den: float
) -> float:
    if den <= 0.0:
        return 1.0 if num > 0 else 0.0
    return float(min(max(num / den, 0.0), 1.0))


def line_search(
    m: AtomicMeasure,
    atom: Atom,
    fm: ForwardModel,
    cost: StepCost,
) -> float:
    """Exact minimiser of lambda -> E((1-lambda) m + lambda atom).

    The fidelity is quadratic along the segment and the regulariser is
    linear, so the optimum is closed form, clamped to [0, 1].
    """
    u = m.measurements(fm)
    v = AtomicMeasure(m.grid, [atom]).measurements(fm)
    w_m = float(sum(a.weight * path_cost(cost, a.path) for a in m.atoms))
    w_mu = atom.weight * path_cost(cost, atom.path)
    num = float(np.sum((fm.data - u) * (v - u))) - (w_mu - w_m)
    den = float(np.sum((v - u) ** 2))
    return _line_search_core(num, den)


# --------------------------------------------------------------------------
# sliding on the exact energy (all atoms) and weight re-optimisation
# --------------------------------------------------------------------------


def exact_objective(
    m: AtomicMeasure, fm: ForwardModel, cost: StepCost
) -> Tuple[BoxProblem, np.ndarray, Callable[[np.ndarray], AtomicMeasure]]:
    """E as a box-constrained objective over every atom's (sqrt h, x) knots.

    The balanced cost moves positions only (masses stay pinned, weights
    fixed).  The unbalanced cost is 1-homogeneous in mass, so the atom
    weight is folded into the profile and the descent works on the carried
    mass sqrt(a h_j) directly; alternating fixed-shape weight updates with
    fixed-weight shape updates zigzags badly on exactly this coupling.
    ``rebuild`` refactors back into a weight in the feasible range and a
    profile in [0, 1].
    """
    balanced = cost.is_balanced
    grid = m.grid
    n = grid.num_knots
    dim = m.atoms[0].path.dim if m.atoms else 2
    s = len(m.atoms)
    weights = np.array([a.weight for a in m.atoms])
    per_atom = n * dim if balanced else n * (1 + dim)
    base_masses = [a.path.masses for a in m.atoms]

    def split(z: np.ndarray):
        """Carried masses a_i h_ij and positions per atom."""
        carried = np.empty((s, n))
        xs = np.empty((s, n, dim))
        for i in range(s):
            blk = z[i * per_atom : (i + 1) * per_atom]
            if balanced:
                carried[i] = weights[i] * base_masses[i]
                xs[i] = blk.reshape(n, dim)
            else:
                carried[i] = blk[:n] ** 2
                xs[i] = blk[n:].reshape(n, dim)
        return carried, xs

    def objective(z: np.ndarray):
        carried, xs = split(z)
        grad = np.zeros_like(z)
        u = np.empty_like(fm.data)
        for j in range(n):
            u[j] = fm.apply(j, carried[:, j], xs[:, j, :])
        resid = u - fm.data
        value = 0.5 * float(np.sum(resid**2))
        for j in range(n):
            fld = fm.field(j, resid[j])
            vals = fld.values(xs[:, j, :])
            grads = fld.gradients(xs[:, j, :])
            for i in range(s):
                off = i * per_atom
                if balanced:
                    grad[off + j * dim : off + (j + 1) * dim] += (
                        carried[i, j] * grads[i]
                    )
                else:
                    grad[off + j] += 2.0 * z[off + j] * vals[i]
                    xoff = off + n
                    grad[xoff + j * dim : xoff + (j + 1) * dim] += (
                        carried[i, j] * grads[i]
                    )
        if n > 1:
            for i in range(s):
                off = i * per_atom
                if balanced:
                    wval, _, wdx = _step_terms(
                        cost, np.sqrt(base_masses[i]), xs[i], grid.dt
                    )
                    value += weights[i] * wval
                    grad[off : off + n * dim] += weights[i] * wdx.ravel()
                else:
                    q = z[i * per_atom : i * per_atom + n]
                    wval, wdq, wdx = _step_terms(cost, q, xs[i], grid.dt)
                    value += wval
                    grad[off : off + n] += wdq
                    grad[off + n : off + per_atom] += wdx.ravel()
        return value, grad

    if s:
        if balanced:
            z0 = np.concatenate([a.path.positions.ravel() for a in m.atoms])
            upper = np.ones_like(z0)
        else:
            blocks = []
            ubs = []
            for a in m.atoms:
                blocks.append(np.sqrt(a.weight * a.path.masses))
                blocks.append(a.path.positions.ravel())
                ubs.append(np.full(n, np.sqrt(MASS_CAP)))
                ubs.append(np.ones(n * dim))
            z0 = np.concatenate(blocks)
            upper = np.concatenate(ubs)
    else:
        z0 = np.zeros(0)
        upper = np.ones_like(z0)
    problem = BoxProblem(np.zeros_like(z0), upper, objective)

    def rebuild(z: np.ndarray) -> AtomicMeasure:
        carried, xs = split(z)
        atoms = []
        for i in range(s):
            if balanced:
                atoms.append(Atom(weights[i], KnotPath(grid, base_masses[i], xs[i])))
            else:
                top = float(np.max(carried[i]))
                w = max(top, 1.0)
                atoms.append(Atom(w, KnotPath(grid, carried[i] / w, xs[i])))
        return AtomicMeasure(grid, atoms)

    return problem, z0, rebuild


def _project_weight_box(a: np.ndarray, cap: float) -> np.ndarray:
    """Projection onto {a >= 0, sum(a) <= cap}."""
    a = np.maximum(a, 0.0)
    total = a.sum()
    if total <= cap:
        return a
    # project onto the simplex {a >= 0, sum = cap}
    u = np.sort(a)[::-1]
    css = np.cumsum(u) - cap
    rho = np.nonzero(u - css / (np.arange(a.size) + 1) > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(a - tau, 0.0)


def optimal_weights(
    gram: np.ndarray, lin: np.ndarray, cap: float, a0: np.ndarray
) -> np.ndarray:
    """Minimise 0.5 a'Ga + lin'a over {a >= 0, sum(a) <= cap}.

    Projected gradient followed by an exact active-set polish; the result
    is never worse than a0.  The polish solves the KKT system on the
    positive support so interior optima satisfy (Ga + lin)_i = 0 to
    machine precision.
    """
    s = gram.shape[0]
    if s == 0:
        return a0.copy()

    def qval(a):
        return 0.5 * float(a @ gram @ a) + float(lin @ a)

    lip = float(np.linalg.norm(gram, 2)) if s > 1 else float(abs(gram[0, 0]))
    lip = max(lip, 1e-30)
    a = _project_weight_box(a0.copy(), cap)
    for _ in range(500):
        g = gram @ a + lin
        a_new = _project_weight_box(a - g / lip, cap)
        if np.max(np.abs(a_new - a)) <= 1e-14 * max(1.0, np.max(np.abs(a))):
            a = a_new
            break
        a = a_new

    best = a
    support = np.where(a > 1e-12)[0]
    for _ in range(3 * s + 10):
        if support.size == 0:
            cand = np.zeros(s)
        else:
            sub_g = gram[np.ix_(support, support)]
            sub_l = lin[support]
            x, *_ = np.linalg.lstsq(sub_g, -sub_l, rcond=None)
            if x.sum() > cap * (1.0 + 1e-12):
                # simplex face active: bordered KKT system
                kkt = np.zeros((support.size + 1, support.size + 1))
                kkt[:-1, :-1] = sub_g
                kkt[:-1, -1] = 1.0
                kkt[-1, :-1] = 1.0
                rhs = np.concatenate([-sub_l, [cap]])
                sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
                x = sol[:-1]
            if np.any(x < -1e-14):
                support = support[x > 1e-14]
                continue
            cand = np.zeros(s)
            cand[support] = np.maximum(x, 0.0)
        if cand.sum() <= cap * (1.0 + 1e-10):
            grad = gram @ cand + lin
            mu = max(0.0, -float(np.max(grad[support]))) if support.size else 0.0
            if np.all(grad + mu >= -1e-9 * max(1.0, np.max(np.abs(lin)))):
                best = cand
        break

    candidates = [a0, a, best]
    vals = [qval(c) for c in candidates]
    return candidates[int(np.argmin(vals))].copy()


def reoptimize_weights(
    m: AtomicMeasure, fm: ForwardModel, cost: StepCost, phi0: float
) -> AtomicMeasure:
    """Convex weight update at fixed paths, constrained to the feasible set."""
    if not m.atoms:
        return m
    s = len(m.atoms)
    rows = np.empty((s, fm.data.size))
    for i, atom in enumerate(m.atoms):
        unit = AtomicMeasure(m.grid, [Atom(1.0, atom.path)])
        rows[i] = unit.measurements(fm).ravel()
    costs = np.array([path_cost(cost, a.path) for a in m.atoms])
    gram = rows @ rows.T
    lin = costs - rows @ fm.data.ravel()
    a0 = np.array([a.weight for a in m.atoms])
    a_opt = optimal_weights(gram, lin, 1.0 / phi0, a0)
    return AtomicMeasure(
        m.grid, [Atom(w, atom.path) for w, atom in zip(a_opt, m.atoms)]
    )


SUPPORT_MERGE_TOLS = (1e-4, 3e-3, 2e-2)


def _drop_zero_weights(m: AtomicMeasure) -> AtomicMeasure:
    return AtomicMeasure(m.grid, [a for a in m.atoms if a.weight > 0.0])


def slide_exact(
    m: AtomicMeasure,
    fm: ForwardModel,
    cost: StepCost,
    phi0: float,
    dedup_tol: float = 1e-6,
    max_iter: int = 200,
    gtol: float = 1e-8,
) -> AtomicMeasure:
    """Joint descent of E over all atoms, weight re-optimisation, dedup.

    Sliding and the weight update cannot merge atoms that ride the same
    track with split mass profiles (the energy is flat across the split),
    so an energy-guarded consolidation ladder follows: flat-metric dedup,
    then support merges at increasing position tolerances, each kept only
    if the re-optimised energy does not get worse.  The final result is
    accepted only if its energy does not exceed E(m).
    """
    if not m.atoms:
        return m
    start = energy(m, fm, cost).total

    def descend(measure: AtomicMeasure, budget: int) -> AtomicMeasure:
        problem, z0, rebuild = exact_objective(measure, fm, cost)
        z, _ = minimize(problem, z0, max_iter=budget, gtol=gtol)
        out = reoptimize_weights(rebuild(z), fm, cost, phi0)
        return _drop_zero_weights(out)

    best = descend(m, max_iter)
    best_energy = energy(best, fm, cost).total
    slack = 1e-10 * max(1.0, abs(best_energy))

    merged = _drop_zero_weights(consolidate(best, dedup_tol))
    if len(merged) < len(best):
        cand_energy = energy(merged, fm, cost).total
        if cand_energy <= best_energy + slack:
            best, best_energy = merged, cand_energy
    for tol in SUPPORT_MERGE_TOLS:
        trial = support_consolidate(best, tol)
        if len(trial) >= len(best):
            continue
        trial = descend(trial, max_iter)
        cand_energy = energy(trial, fm, cost).total
        if cand_energy <= best_energy + slack:
            best, best_energy = trial, cand_energy
    if best_energy <= start:
        return best
    return m


# --------------------------------------------------------------------------
# dual gap
# --------------------------------------------------------------------------


def dual_gap(
    m: AtomicMeasure,
    oracle_best,
    fm: ForwardModel,
    cost: StepCost,
    phi0: float,
) -> float:
    """Frank-Wolfe surrogate gap over the discrete feasible set.

    g = sum_i a_i Etilde(gamma_i) - (1/phi0) min(Etilde*, 0), where the
    second term is the best extreme point including the zero measure.
    Nonnegative g certifies optimality over the mesh up to g.
    """
    lin = linearize(m, fm, cost)
    if isinstance(oracle_best, OracleResult):
        best_value = oracle_best.best_value
    elif isinstance(oracle_best, tuple):
        best_value = float(oracle_best[0])
    else:
        best_value = float(oracle_best)
    return _dual_gap(lin, m, best_value, phi0)


def _dual_gap(
    lin: LinearizedEnergy, m: AtomicMeasure, best_value: float, phi0: float
) -> float:
    own = sum(a.weight * lin.path_value(a.path) for a in m.atoms)
    return float(own - min(best_value, 0.0) / phi0)


# --------------------------------------------------------------------------
# the outer loop
# --------------------------------------------------------------------------


def _make_mesh(cfg: SolverConfig, grid: TimeGrid, iteration: int, resolution: int) -> Mesh:
    if cfg.mesh_kind == UNIFORM:
        return uniform_mesh(grid, resolution, cfg.mesh_m)
    return random_mesh(grid, cfg.mesh_n, cfg.mesh_m, seed=(cfg.seed, iteration))


def solve(
    cfg: SolverConfig,
    fm: ForwardModel,
    progress: Optional[Callable[[IterationRecord], None]] = None,
) -> SolveResult:
    """Run the sliding Frank-Wolfe loop from the zero measure."""
    grid = fm.grid
    cost = cfg.cost
    measure = AtomicMeasure.empty(grid)
    report = energy(measure, fm, cost)
    resolution = min(cfg.uniform_start, cfg.mesh_n)
    records: List[IterationRecord] = [
        IterationRecord(
            0,
            report.total,
            report.fidelity,
            report.regulariser,
            math.nan,
            0,
            resolution if cfg.mesh_kind == UNIFORM else cfg.mesh_n,
            0.0,
        )
    ]
    stop = StopReason.max_iters()
    for n in range(1, cfg.max_iters + 1):
        tic = time.perf_counter()
        lin = linearize(measure, fm, cost)
        mesh = _make_mesh(cfg, grid, n, resolution)
        result = dp_shortest_paths(mesh, lin.fields, cost, cfg.k, cfg.vmax)
        gap = _dual_gap(lin, measure, result.best_value, cfg.phi0)

        slid: List[Tuple[KnotPath, float]] = [
            slide_linearized(p, lin, cfg.slide_max_iter, cfg.slide_gtol)
            for p in result.paths
        ]
        slid.sort(key=lambda t: t[1])

        atoms = list(measure.atoms)
        u = measure.measurements(fm)
        w_cur = float(sum(a.weight * path_cost(cost, a.path) for a in atoms))
        ext_w = 1.0 / cfg.phi0
        for path, _ in slid:
            v = np.empty_like(u)
            for j in range(grid.num_knots):
                v[j] = fm.apply(
                    j, np.array([ext_w * path.masses[j]]), path.positions[j][None, :]
                )
            w_mu = ext_w * path_cost(cost, path)
            num = float(np.sum((fm.data - u) * (v - u))) - (w_mu - w_cur)
            den = float(np.sum((v - u) ** 2))
            lam = _line_search_core(num, den)
            if lam > 0.0:
                atoms = [Atom(a.weight * (1.0 - lam), a.path) for a in atoms]
                atoms.append(Atom(lam * ext_w, path))
                u = (1.0 - lam) * u + lam * v
                w_cur = (1.0 - lam) * w_cur + lam * w_mu
        inserted = AtomicMeasure(grid, atoms)
        new_measure = slide_exact(
            inserted,
            fm,
            cost,
            cfg.phi0,
            cfg.dedup_tol,
            cfg.slide_max_iter,
            cfg.slide_gtol,
        )
        new_report = energy(new_measure, fm, cost)
        elapsed_ms = (time.perf_counter() - tic) * 1e3
        records.append(
            IterationRecord(
                n,
                new_report.total,
                new_report.fidelity,
                new_report.regulariser,
                gap,
                len(new_measure),
                resolution if cfg.mesh_kind == UNIFORM else cfg.mesh_n,
                elapsed_ms,
            )
        )
        if progress is not None:
            progress(records[-1])
        stalled = (report.total - new_report.total) <= cfg.stall_rtol * max(
            1.0, abs(report.total)
        )
        measure, report = new_measure, new_report
        if cfg.gap_tol is not None and gap <= cfg.gap_tol:
            stop = StopReason.gap_below(cfg.gap_tol)
            break
        if cfg.mesh_kind == UNIFORM and stalled:
            resolution *= 2
            if resolution > cfg.mesh_n:
                stop = StopReason.uniform_converged()
                break
    final = consolidate(measure, cfg.dedup_tol)
    final_report = energy(final, fm, cost)
    return SolveResult(final, tuple(records), stop, final_report)


def records_to_csv(records: Sequence[IterationRecord]) -> str:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            f"{r.iteration},{r.energy:.17g},{r.fidelity:.17g},"
            f"{r.regulariser:.17g},{r.gap:.17g},{r.atoms},{r.mesh_n},"
            f"{r.time_ms:.3f}"
        )
    return "\n".join(lines) + "\n"
