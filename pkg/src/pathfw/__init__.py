"""Off-the-grid reconstruction of time-varying sparse measures.

The library minimises a convex energy (quadratic data fidelity plus a
dynamic transport regulariser) over atomic measures on weighted paths,
with an inexact sliding Frank-Wolfe method whose linear oracle is a
shortest-path computation on a layered DAG.
"""

__version__ = "0.1.0"

from .forward import ForwardModel, FrequencySet, GradientField
from .measures import (
    Atom,
    AtomicMeasure,
    EnergyReport,
    FeasibleConfig,
    consolidate,
    energy,
)
from .oracle import (
    Mesh,
    MeshLayer,
    OracleResult,
    brute_force_oracle,
    dp_shortest_paths,
    random_mesh,
    uniform_mesh,
)
from .paths import (
    ContinuousPath,
    GridMismatchError,
    KnotPath,
    MassPos,
    TimeGrid,
    flat_metric,
    path_distance,
    sample_phantom_path,
)
from .phantoms import Phantom, ground_truth_measure, make_phantom, synthesize_data
from .solver import (
    IterationRecord,
    SolveResult,
    SolverConfig,
    StopReason,
    dual_gap,
    line_search,
    linearize,
    slide_exact,
    slide_linearized,
    solve,
)
from .transport import StepCost, geodesic_interpolate, path_cost, step

__all__ = [
    "__version__",
    "Atom",
    "AtomicMeasure",
    "ContinuousPath",
    "EnergyReport",
    "FeasibleConfig",
    "ForwardModel",
    "FrequencySet",
    "GradientField",
    "GridMismatchError",
    "IterationRecord",
    "KnotPath",
    "MassPos",
    "Mesh",
    "MeshLayer",
    "OracleResult",
    "Phantom",
    "SolveResult",
    "SolverConfig",
    "StepCost",
    "StopReason",
    "TimeGrid",
    "brute_force_oracle",
    "consolidate",
    "dp_shortest_paths",
    "dual_gap",
    "energy",
    "flat_metric",
    "geodesic_interpolate",
    "ground_truth_measure",
    "line_search",
    "linearize",
    "make_phantom",
    "path_cost",
    "path_distance",
    "random_mesh",
    "sample_phantom_path",
    "slide_exact",
    "slide_linearized",
    "solve",
    "step",
    "synthesize_data",
    "uniform_mesh",
]
