"""Mesh generation and the layered-DAG shortest-path linear oracle.

The linearised energy of a discrete path through per-time grids Xi_j is

    Etilde(gamma) = sum_j h_j eta_j(x_j) + sum_j step_j(knot_{j-1}, knot_j),

a shortest-path problem on the DAG whose layer j holds the nodes of Xi_j.
``dp_shortest_paths`` relaxes one layer at a time and returns the optimal
path into each of the k cheapest final nodes; ``brute_force_oracle``
enumerates every path and exists purely to cross-check the DP.

Meshes carry an optional mass-grid x position-grid product structure; the
relaxation then evaluates the position-dependent part of the step cost once
per position pair rather than once per node pair, and identical position
arrays between consecutive layers (uniform meshes) share their pairwise
distance matrices across intervals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .forward import GradientField
from .paths import KnotPath, TimeGrid
from .transport import StepCost, step

__all__ = [
    "MeshLayer",
    "Mesh",
    "OracleResult",
    "InfeasiblePathError",
    "BruteForceSizeError",
    "random_mesh",
    "uniform_mesh",
    "dp_shortest_paths",
    "brute_force_oracle",
]

_DENSE_BLOCK = 512  # destination columns per relaxation block
BRUTE_FORCE_LIMIT = 10**6


class InfeasiblePathError(RuntimeError):
    """No path satisfies the velocity bound."""


class BruteForceSizeError(ValueError):
    """Instance too large for exhaustive enumeration."""


@dataclass(frozen=True, eq=False)
class MeshLayer:
    """Nodes of one DAG layer.

    ``masses``/``positions`` list every node.  When the layer is a product
    H x X, ``pmasses``/``ppositions`` hold the factors and node i maps to
    (pmasses[i // len(X)], ppositions[i % len(X)]).
    """

    masses: np.ndarray
    positions: np.ndarray
    pmasses: Optional[np.ndarray] = None
    ppositions: Optional[np.ndarray] = None

    def __post_init__(self):
        m = np.ascontiguousarray(self.masses, dtype=float)
        x = np.ascontiguousarray(self.positions, dtype=float)
        if m.ndim != 1 or x.ndim != 2 or x.shape[0] != m.shape[0]:
            raise ValueError("layer arrays must be (n,) masses and (n, d) positions")
        if m.size == 0:
            raise ValueError("mesh layers must be nonempty")
        if np.any(m < 0) or np.any(m > 1) or np.any(x < 0) or np.any(x > 1):
            raise ValueError("mesh nodes must lie in [0,1] x [0,1]^d")
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "positions", x)

    @classmethod
    def product(cls, mass_levels: np.ndarray, grid_points: np.ndarray) -> "MeshLayer":
        h = np.ascontiguousarray(mass_levels, dtype=float)
        x = np.ascontiguousarray(grid_points, dtype=float)
        masses = np.repeat(h, x.shape[0])
        positions = np.tile(x, (h.shape[0], 1))
        return cls(masses, positions, pmasses=h, ppositions=x)

    @property
    def size(self) -> int:
        return self.masses.size

    @property
    def is_product(self) -> bool:
        return self.pmasses is not None


@dataclass(frozen=True, eq=False)
class Mesh:
    """Per-time node layers Xi_0, ..., Xi_T over a common time grid."""

    grid: TimeGrid
    layers: Tuple[MeshLayer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.layers) != self.grid.num_knots:
            raise ValueError("need one mesh layer per grid time")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def edge_count(self) -> int:
        return sum(
            self.layers[j - 1].size * self.layers[j].size
            for j in range(1, self.num_layers)
        )

    def node_count(self) -> int:
        return sum(layer.size for layer in self.layers)


@dataclass(frozen=True, eq=False)
class OracleResult:
    """k best endpoint paths, ordered by linearised energy."""

    paths: Tuple[KnotPath, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if np.any(np.diff(v) < 0):
            raise ValueError("oracle values must be nondecreasing")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "paths", tuple(self.paths))

    @property
    def best(self) -> KnotPath:
        return self.paths[0]

    @property
    def best_value(self) -> float:
        return float(self.values[0])


def random_mesh(grid: TimeGrid, n: int, m: int, seed, dim: int = 2) -> Mesh:
    """Fresh independent uniform draws per layer: max(m,1)*n^dim nodes each.

    m = 0 gives the balanced mesh with the single mass level 1; draws are
    deterministic per seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if m < 0:
        raise ValueError("m must be >= 0")
    rng = np.random.default_rng(seed)
    layers = []
    for _ in range(grid.num_knots):
        masses = rng.uniform(size=m) if m > 0 else np.ones(1)
        points = rng.uniform(size=(n**dim, dim))
        layers.append(MeshLayer.product(masses, points))
    return Mesh(grid, tuple(layers))


def uniform_mesh(grid: TimeGrid, resolution: int, m: int, dim: int = 2) -> Mesh:
    """Identical layers: masses {0, 1/m, ..., 1} x lattice of spacing 1/resolution."""
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    if m < 0:
        raise ValueError("m must be >= 0")
    masses = np.linspace(0.0, 1.0, m + 1) if m > 0 else np.ones(1)
    axis = np.linspace(0.0, 1.0, resolution + 1)
    points = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(
        -1, dim
    )
    layer = MeshLayer.product(masses, points)
    return Mesh(grid, tuple(layer for _ in range(grid.num_knots)))


# --------------------------------------------------------------------------
# dynamic programming
# --------------------------------------------------------------------------


def _node_costs(layer: MeshLayer, eta: GradientField) -> np.ndarray:
    """h * eta_j(x) per node, evaluating eta once per distinct position."""
    if layer.is_product:
        vals = eta.values(layer.ppositions)
        return layer.masses * np.tile(vals, layer.pmasses.size)
    return layer.masses * eta.values(layer.positions)


def _sq_dists(xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    sq = (
        np.sum(xa**2, axis=1)[:, None]
        + np.sum(xb**2, axis=1)[None, :]
        - 2.0 * (xa @ xb.T)
    )
    return np.maximum(sq, 0.0)


class _PairCache:
    """Position-pair matrices, keyed by array identity so that uniform
    meshes (identical layers) compute them once per oracle call."""

    def __init__(self):
        self._sq: Dict[Tuple[int, int], np.ndarray] = {}
        self._cos: Dict[Tuple[int, int], np.ndarray] = {}

    def sq(self, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
        key = (id(xa), id(xb))
        if key not in self._sq:
            self._sq[key] = _sq_dists(xa, xb)
        return self._sq[key]

    def cos_clamped(self, xa: np.ndarray, xb: np.ndarray, delta: float) -> np.ndarray:
        key = (id(xa), id(xb))
        if key not in self._cos:
            sep = np.sqrt(self.sq(xa, xb))
            self._cos[key] = np.cos(np.minimum(sep / (2.0 * delta), np.pi))
        return self._cos[key]


def _vmax_mask(cache, xa, xb, vmax, dt) -> Optional[np.ndarray]:
    if vmax is None or np.isinf(vmax):
        return None
    return cache.sq(xa, xb) > (vmax * dt) ** 2


def _relax_balanced_product(val, prev, cur, cost, dt, cache, vmax):
    """Balanced step ignores masses: collapse the source mass axis first
    (first minimum wins), then relax positions densely in blocks."""
    pa, pb = prev.ppositions, cur.ppositions
    na, nb = pa.shape[0], pb.shape[0]
    grid_val = val[:na].copy()
    grid_arg = np.zeros(na, dtype=np.int64)
    for ih in range(1, prev.pmasses.size):
        chunk = val[ih * na : (ih + 1) * na]
        better = chunk < grid_val
        grid_val[better] = chunk[better]
        grid_arg[better] = ih
    sq = cache.sq(pa, pb)
    mask = _vmax_mask(cache, pa, pb, vmax, dt)
    coef = 0.5 * cost.beta / dt
    base = cost.alpha * dt
    best = np.empty(nb)
    barg = np.empty(nb, dtype=np.int64)
    for lo in range(0, nb, _DENSE_BLOCK):
        hi = min(lo + _DENSE_BLOCK, nb)
        blk = grid_val[:, None] + coef * sq[:, lo:hi]
        if mask is not None:
            blk = np.where(mask[:, lo:hi], np.inf, blk)
        arg = np.argmin(blk, axis=0)
        best[lo:hi] = blk[arg, np.arange(hi - lo)] + base
        barg[lo:hi] = arg
    parents = grid_arg[barg] * na + barg
    return np.tile(best, cur.pmasses.size), np.tile(parents, cur.pmasses.size)


def _relax_unbalanced_product(val, prev, cur, cost, dt, cache, vmax):
    """Unbalanced relaxation looping over mass-level pairs on shared grids."""
    pa, pb = prev.ppositions, cur.ppositions
    na, nb = pa.shape[0], pb.shape[0]
    ha, hb = prev.pmasses, cur.pmasses
    cosm = cache.cos_clamped(pa, pb, cost.delta)
    mask = _vmax_mask(cache, pa, pb, vmax, dt)
    scale = 4.0 * cost.beta * cost.delta**2 / dt
    best = np.full((hb.size, nb), np.inf)
    barg = np.zeros((hb.size, nb), dtype=np.int64)
    cols = np.arange(nb)
    for ia, h0 in enumerate(ha):
        vslice = val[ia * na : (ia + 1) * na]
        if not np.any(np.isfinite(vslice)):
            continue
        for ib, h1 in enumerate(hb):
            const = (cost.alpha * dt + scale) * 0.5 * (h0 + h1)
            tmp = vslice[:, None] - (scale * np.sqrt(h0 * h1)) * cosm
            if mask is not None:
                tmp = np.where(mask, np.inf, tmp)
            arg = np.argmin(tmp, axis=0)
            cand = tmp[arg, cols] + const
            better = cand < best[ib]
            best[ib, better] = cand[better]
            barg[ib, better] = ia * na + arg[better]
    return best.reshape(-1), barg.reshape(-1)


def _relax_dense(val, prev, cur, cost, dt, cache, vmax):
    """General relaxation over full node lists."""
    xa, xb = prev.positions, cur.positions
    nb = cur.size
    sq = cache.sq(xa, xb)
    mask = _vmax_mask(cache, xa, xb, vmax, dt)
    if cost.is_balanced:
        smat = cost.alpha * dt + (0.5 * cost.beta / dt) * sq
    else:
        h0 = prev.masses[:, None]
        h1 = cur.masses[None, :]
        cosm = cache.cos_clamped(xa, xb, cost.delta)
        smat = cost.alpha * dt * 0.5 * (h0 + h1) + (
            4.0 * cost.beta * cost.delta**2 / dt
        ) * (0.5 * (h0 + h1) - np.sqrt(h0 * h1) * cosm)
    total = val[:, None] + smat
    if mask is not None:
        total = np.where(mask, np.inf, total)
    parents = np.argmin(total, axis=0)
    best = total[parents, np.arange(nb)]
    return best, parents


def dp_shortest_paths(
    mesh: Mesh,
    etas: Sequence[GradientField],
    cost: StepCost,
    k: int,
    vmax: Optional[float] = None,
) -> OracleResult:
    """Exact minimisers of the linearised energy over the mesh product.

    Returns the optimal path into each of the k cheapest final nodes
    (fewer if the final layer is smaller).  With ``vmax`` set, edges with
    |x_j - x_{j-1}| > vmax * dt_j are removed; an ``InfeasiblePathError``
    is raised when nothing remains reachable.  Ties resolve to the first
    minimum in the relaxation order, so results are deterministic.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    layers = mesh.layers
    if len(etas) != len(layers):
        raise ValueError("need one eta field per mesh layer")
    cache = _PairCache()
    val = _node_costs(layers[0], etas[0])
    parents: List[np.ndarray] = []
    for j in range(1, len(layers)):
        dt = mesh.grid.dt[j - 1]
        prev, cur = layers[j - 1], layers[j]
        if prev.is_product and cur.is_product:
            if cost.is_balanced:
                best, par = _relax_balanced_product(val, prev, cur, cost, dt, cache, vmax)
            else:
                best, par = _relax_unbalanced_product(val, prev, cur, cost, dt, cache, vmax)
        else:
            best, par = _relax_dense(val, prev, cur, cost, dt, cache, vmax)
        val = best + _node_costs(cur, etas[j])
        parents.append(par)
        if not np.any(np.isfinite(val)):
            raise InfeasiblePathError(
                f"no admissible edge into layer {j} under the velocity bound"
            )
    finite = np.isfinite(val)
    order = np.argsort(val, kind="stable")
    order = order[finite[order]][: min(k, int(np.count_nonzero(finite)))]
    paths = []
    for end in order:
        idx = [int(end)]
        for par in reversed(parents):
            idx.append(int(par[idx[-1]]))
        idx.reverse()
        masses = np.array([layers[j].masses[i] for j, i in enumerate(idx)])
        pos = np.array([layers[j].positions[i] for j, i in enumerate(idx)])
        paths.append(KnotPath(mesh.grid, masses, pos))
    return OracleResult(tuple(paths), val[order])


# --------------------------------------------------------------------------
# exhaustive reference
# --------------------------------------------------------------------------


def brute_force_oracle(
    mesh: Mesh,
    etas: Sequence[GradientField],
    cost: StepCost,
    k: int,
    vmax: Optional[float] = None,
) -> OracleResult:
    """Exhaustive enumeration of every mesh path; same contract as the DP.

    The full tensor of path values is materialised (at most 10^6 paths).
    Steps are evaluated with the scalar ``transport.step`` and eta fields
    point by point, independently of the DP relaxation kernels.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    layers = mesh.layers
    sizes = [layer.size for layer in layers]
    total_paths = int(np.prod([float(s) for s in sizes]))
    if total_paths > BRUTE_FORCE_LIMIT:
        raise BruteForceSizeError(
            f"{total_paths} paths exceed the enumeration limit {BRUTE_FORCE_LIMIT}"
        )
    n_layers = len(layers)
    node_costs = []
    for j, layer in enumerate(layers):
        c = np.array(
            [
                layer.masses[i] * etas[j].value(layer.positions[i])
                for i in range(layer.size)
            ]
        )
        node_costs.append(c)
    value = np.zeros(sizes, dtype=float) if n_layers > 1 else node_costs[0].copy()
    if n_layers > 1:
        from .paths import MassPos

        for j in range(n_layers):
            shape = [1] * n_layers
            shape[j] = sizes[j]
            value = value + node_costs[j].reshape(shape)
        for j in range(1, n_layers):
            prev, cur = layers[j - 1], layers[j]
            t0, t1 = mesh.grid.times[j - 1], mesh.grid.times[j]
            smat = np.empty((prev.size, cur.size))
            for a in range(prev.size):
                pa = MassPos(prev.masses[a], prev.positions[a])
                for b in range(cur.size):
                    pb = MassPos(cur.masses[b], cur.positions[b])
                    if vmax is not None and not np.isinf(vmax):
                        if np.linalg.norm(pb.pos - pa.pos) > vmax * (t1 - t0):
                            smat[a, b] = np.inf
                            continue
                    smat[a, b] = step(cost, pa, pb, t0, t1)
            shape = [1] * n_layers
            shape[j - 1] = prev.size
            shape[j] = cur.size
            value = value + smat.reshape(shape)
    flat = value.reshape(-1, sizes[-1])
    endpoint_best = flat.min(axis=0)
    endpoint_arg = flat.argmin(axis=0)
    finite = np.isfinite(endpoint_best)
    if not np.any(finite):
        raise InfeasiblePathError("no admissible path reaches the final layer")
    order = np.argsort(endpoint_best, kind="stable")
    order = order[finite[order]][: min(k, int(np.count_nonzero(finite)))]
    paths = []
    for end in order:
        prefix = np.unravel_index(endpoint_arg[end], sizes[:-1]) if n_layers > 1 else ()
        idx = [int(i) for i in prefix] + [int(end)]
        masses = np.array([layers[j].masses[i] for j, i in enumerate(idx)])
        pos = np.array([layers[j].positions[i] for j, i in enumerate(idx)])
        paths.append(KnotPath(mesh.grid, masses, pos))
    return OracleResult(tuple(paths), endpoint_best[order])
