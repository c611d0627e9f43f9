"""Command-line entry point: phantom synthesis, reconstruction, evaluation,
and the oracle benchmark.

Run configurations are INI files with sections [problem], [mesh], [solver],
and [output]; any value can be overridden by a command-line flag.  All file
formats (data JSON, solution JSON, convergence CSV) are documented in the
README.
"""

from __future__ import annotations

import configparser
import json
import sys
import time
from pathlib import Path
from typing import Optional

import click
import numpy as np

from .forward import ForwardModel
from .measures import (
    AtomicMeasure,
    energy,
    measure_from_dict,
    measure_to_dict,
)
from .oracle import dp_shortest_paths, uniform_mesh
from .paths import TimeGrid, _flat_metric_arrays
from .phantoms import PHANTOM_NAMES, ground_truth_measure, make_phantom, synthesize_data
from .solver import SolverConfig, StopReason, records_to_csv, solve
from .transport import StepCost

_THREAD_LIMITER = None  # keeps the threadpoolctl handle alive


_CONFIG_DEFAULTS = {
    "problem": {
        "cost": "bb",
        "alpha": "0.5",
        "beta": "0.5",
        "delta": "0.1",
        "phi0": "0.1",
    },
    "mesh": {"kind": "uniform", "k": "1", "n": "64", "m": "0", "seed": "0", "vmax": ""},
    "solver": {
        "max_iters": "100",
        "gap_tol": "",
        "stall_rtol": "1e-10",
        "dedup_tol": "1e-6",
        "slide_max_iter": "200",
        "slide_gtol": "1e-8",
        "uniform_start": "16",
    },
    "output": {"solution": "solution.json", "convergence": "convergence.csv"},
}


def _load_ini(path: Optional[str]) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser.read_dict(_CONFIG_DEFAULTS)
    if path is not None:
        read = parser.read(path)
        if not read:
            raise click.ClickException(f"cannot read config file {path}")
    return parser


def _build_solver_config(parser: configparser.ConfigParser, overrides: dict) -> SolverConfig:
    def get(section, key, cast=str):
        if overrides.get(key) is not None:
            return overrides[key]
        raw = parser.get(section, key, fallback=_CONFIG_DEFAULTS[section][key])
        if raw == "":
            return None
        return cast(raw)

    kind = get("problem", "cost")
    alpha = get("problem", "alpha", float)
    beta = get("problem", "beta", float)
    delta = get("problem", "delta", float)
    try:
        if kind == "bb":
            cost = StepCost.balanced(alpha, beta)
        elif kind == "wfr":
            cost = StepCost.unbalanced(alpha, beta, delta)
        else:
            raise ValueError(f"unknown cost {kind!r}; use 'bb' or 'wfr'")
        return SolverConfig(
            cost=cost,
            phi0=get("problem", "phi0", float),
            mesh_kind=get("mesh", "kind"),
            k=get("mesh", "k", int),
            mesh_n=get("mesh", "n", int),
            mesh_m=get("mesh", "m", int),
            seed=get("mesh", "seed", int),
            vmax=get("mesh", "vmax", float),
            max_iters=get("solver", "max_iters", int),
            gap_tol=get("solver", "gap_tol", float),
            stall_rtol=get("solver", "stall_rtol", float),
            dedup_tol=get("solver", "dedup_tol", float),
            slide_max_iter=get("solver", "slide_max_iter", int),
            slide_gtol=get("solver", "slide_gtol", float),
            uniform_start=get("solver", "uniform_start", int),
        )
    except ValueError as exc:
        raise click.ClickException(str(exc))


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise click.ClickException(f"no such file: {path}")
    except json.JSONDecodeError as exc:
        raise click.ClickException(f"invalid JSON in {path}: {exc}")


@click.group()
@click.option("--threads", type=int, default=0, show_default=True,
              help="Cap the numeric thread pools (0 = automatic).")
def main(threads: int) -> None:
    """Reconstruct time-varying sparse measures from dynamic measurements."""
    global _THREAD_LIMITER
    if threads > 0:
        try:
            from threadpoolctl import threadpool_limits

            _THREAD_LIMITER = threadpool_limits(limits=threads)
        except ImportError:  # pragma: no cover
            click.echo("threadpoolctl not installed; --threads ignored", err=True)


@main.command()
@click.argument("name", type=click.Choice(PHANTOM_NAMES))
@click.option("--num-intervals", "-T", "num_intervals", type=int, default=21,
              show_default=True, help="Number of time intervals T.")
@click.option("--kmax", type=int, default=3, show_default=True,
              help="Frequencies span the integer grid {-K..K}^2 (half, deduplicated).")
@click.option("--window-sigma", type=float, default=0.3, show_default=True)
@click.option("--schedule", type=click.Choice(["all", "rotate"]), default="all",
              show_default=True)
@click.option("--noise", type=float, default=0.0, show_default=True,
              help="Relative Gaussian noise level on the stacked data.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--data-out", type=click.Path(dir_okay=False), default="data.json",
              show_default=True)
@click.option("--truth-out", type=click.Path(dir_okay=False), default="truth.json",
              show_default=True)
def phantom(name, num_intervals, kmax, window_sigma, schedule, noise, seed,
            data_out, truth_out):
    """Synthesise measurement data and ground truth for a named phantom."""
    if num_intervals < 1:
        raise click.ClickException("num-intervals must be >= 1")
    if noise < 0:
        raise click.ClickException("noise must be >= 0")
    grid = TimeGrid.uniform(num_intervals)
    template = ForwardModel.template(grid, kmax=kmax, window_sigma=window_sigma,
                                     schedule=schedule)
    ph = make_phantom(name)
    fm = synthesize_data(ph, template, noise, seed)
    fm.save(data_out)
    truth = ground_truth_measure(ph, grid)
    with open(truth_out, "w") as fh:
        json.dump(measure_to_dict(truth), fh)
    click.echo(
        f"wrote {data_out} ({fm.m} frequencies x {grid.num_knots} times, "
        f"noise {noise}) and {truth_out} ({len(truth)} atoms)"
    )


@main.command()
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              default=None, help="INI run configuration.")
@click.option("--cost", "cost", type=click.Choice(["bb", "wfr"]), default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--delta", type=float, default=None)
@click.option("--phi0", type=float, default=None)
@click.option("--mesh-kind", "kind", type=click.Choice(["uniform", "random"]),
              default=None)
@click.option("--k", type=int, default=None, help="Multistart parameter k.")
@click.option("--mesh-n", "n", type=int, default=None, help="Spatial resolution N.")
@click.option("--mesh-m", "m", type=int, default=None, help="Mass levels M.")
@click.option("--seed", type=int, default=None)
@click.option("--vmax", type=float, default=None, help="Optional velocity bound.")
@click.option("--max-iters", "max_iters", type=int, default=None)
@click.option("--gap-tol", "gap_tol", type=float, default=None)
@click.option("--solution-out", type=click.Path(dir_okay=False), default=None)
@click.option("--convergence-out", type=click.Path(dir_okay=False), default=None)
@click.option("--verbose", is_flag=True, help="Print one line per iteration.")
@click.pass_context
def reconstruct(ctx, data, config_path, solution_out, convergence_out, verbose,
                **overrides):
    """Reconstruct a sparse dynamic measure from a data JSON file."""
    parser = _load_ini(config_path)
    cfg = _build_solver_config(parser, overrides)
    try:
        fm = ForwardModel.from_dict(_load_json(data))
    except (KeyError, ValueError) as exc:
        raise click.ClickException(f"invalid data file {data}: {exc}")
    progress = None
    if verbose:
        def progress(rec):
            click.echo(
                f"iter {rec.iteration:3d}  E={rec.energy:.9g}  "
                f"gap={rec.gap:.3g}  atoms={rec.atoms}  N={rec.mesh_n}  "
                f"{rec.time_ms:.0f} ms"
            )
    result = solve(cfg, fm, progress=progress)
    solution_out = solution_out or parser.get("output", "solution")
    convergence_out = convergence_out or parser.get("output", "convergence")
    with open(solution_out, "w") as fh:
        json.dump(measure_to_dict(result.measure, cfg.phi0, result.report), fh)
    with open(convergence_out, "w") as fh:
        fh.write(records_to_csv(result.records))
    click.echo(
        f"stop={result.stop.kind} iterations={result.records[-1].iteration} "
        f"atoms={len(result.measure)} energy={result.report.total:.12g}"
    )
    if result.stop.kind == StopReason.MAX_ITERS:
        ctx.exit(2)


def slice_recovery_errors(
    solution: AtomicMeasure,
    truth: AtomicMeasure,
    radius: float,
    mass_floor: float = 1e-9,
) -> dict:
    """Label-free per-knot comparison of the reconstructed slice measures.

    Atom identity through a track crossing is not determined by the energy
    (exchanging labels between the surrounding knots leaves every data
    slice unchanged and can lower the transport cost), so trajectories are
    compared slice by slice.  At each knot every reconstructed point is
    assigned to the nearest ground-truth point carrying positive mass; per
    truth point the assigned masses are summed within ``radius``.  Reports
    the worst position error over assigned mass-bearing points, the worst
    clustered-mass error, and the largest reconstructed mass stranded
    farther than ``radius`` from every truth point.
    """
    if not solution.grid.same_as(truth.grid):
        raise ValueError("solution and ground truth use different time grids")
    max_pos = 0.0
    max_mass = 0.0
    max_spurious = 0.0
    for j in range(truth.grid.num_knots):
        wt, xt = truth.time_slice(j)
        keep = wt > 0
        wt, xt = wt[keep], xt[keep]
        ws, xs = solution.time_slice(j)
        live = ws > mass_floor
        ws, xs = ws[live], xs[live]
        if wt.size == 0:
            if ws.size:
                max_spurious = max(max_spurious, float(np.max(ws)))
            continue
        clustered = np.zeros(wt.size)
        for w, x in zip(ws, xs):
            dists = np.linalg.norm(xt - x, axis=1)
            nearest = int(np.argmin(dists))
            if dists[nearest] <= radius:
                clustered[nearest] += w
                max_pos = max(max_pos, float(dists[nearest]))
            else:
                max_spurious = max(max_spurious, float(w))
        max_mass = max(max_mass, float(np.max(np.abs(clustered - wt))))
    return {
        "radius": radius,
        "max_position_error": max_pos,
        "max_clustered_mass_error": max_mass,
        "max_spurious_mass": max_spurious,
    }


def evaluate_measures(solution: AtomicMeasure, truth: AtomicMeasure) -> dict:
    """Optimal assignment between reconstructed and true atoms.

    Atoms are compared after folding the weight into the mass profile
    (a delta_{(h, x)} and (a/c) delta_{(c h, x)} describe the same object),
    using the flat metric maximised over knots.  Positions are reported
    where the true folded mass is positive; zero-mass knots do not pin a
    position.
    """
    from scipy.optimize import linear_sum_assignment

    if not solution.grid.same_as(truth.grid):
        raise ValueError("solution and ground truth use different time grids")
    ns, nt = len(solution), len(truth)
    dist = np.zeros((ns, nt))
    for i, a in enumerate(solution.atoms):
        for j, b in enumerate(truth.atoms):
            dist[i, j] = float(
                np.max(
                    _flat_metric_arrays(
                        a.weight * a.path.masses,
                        a.path.positions,
                        b.weight * b.path.masses,
                        b.path.positions,
                    )
                )
            )
    rows, cols = linear_sum_assignment(dist) if ns and nt else ((), ())
    matches = []
    for i, j in zip(rows, cols):
        a, b = solution.atoms[i], truth.atoms[j]
        folded_sol = a.weight * a.path.masses
        folded_tru = b.weight * b.path.masses
        visible = folded_tru > 0
        pos_err = (
            float(
                np.max(
                    np.linalg.norm(
                        a.path.positions[visible] - b.path.positions[visible], axis=1
                    )
                )
            )
            if np.any(visible)
            else 0.0
        )
        matches.append(
            {
                "solution_index": int(i),
                "truth_index": int(j),
                "flat_distance": float(dist[i, j]),
                "weight_error": abs(a.weight - b.weight),
                "max_mass_error": float(np.max(np.abs(folded_sol - folded_tru))),
                "max_position_error": pos_err,
            }
        )
    return {
        "atom_count": {"solution": ns, "truth": nt},
        "matched": matches,
        "unmatched_solution": sorted(set(range(ns)) - set(int(r) for r in rows)),
        "unmatched_truth": sorted(set(range(nt)) - set(int(c) for c in cols)),
        "total_flat_distance": float(sum(m["flat_distance"] for m in matches)),
    }


@main.command()
@click.argument("solution", type=click.Path(exists=True, dir_okay=False))
@click.argument("truth", type=click.Path(exists=True, dir_okay=False))
@click.option("--radius", type=float, default=0.05, show_default=True,
              help="Clustering radius for the label-free slice comparison.")
def evaluate(solution, truth, radius):
    """Match a solution against ground truth and print a JSON report."""
    sol_dict = _load_json(solution)
    sol = measure_from_dict(sol_dict)
    tru = measure_from_dict(_load_json(truth))
    try:
        report = evaluate_measures(sol, tru)
        report["slice"] = slice_recovery_errors(sol, tru, radius)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    if "energy" in sol_dict:
        report["energy"] = sol_dict["energy"]
    click.echo(json.dumps(report, indent=2, sort_keys=True))


@main.command("oracle-bench")
@click.option("--num-intervals", "-T", "num_intervals", type=int, default=20,
              show_default=True)
@click.option("--resolutions", default="8,16,32", show_default=True,
              help="Comma-separated uniform-mesh resolutions.")
@click.option("--mass-levels", "m", type=int, default=0, show_default=True)
@click.option("--cost", "cost_kind", type=click.Choice(["bb", "wfr"]), default="bb",
              show_default=True)
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--beta", type=float, default=0.5, show_default=True)
@click.option("--delta", type=float, default=0.1, show_default=True)
@click.option("--kmax", type=int, default=3, show_default=True)
@click.option("--repeats", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the CSV here instead of stdout.")
def oracle_bench(num_intervals, resolutions, m, cost_kind, alpha, beta, delta,
                 kmax, repeats, seed, out):
    """Time the DP oracle on uniform meshes and report a CSV table."""
    try:
        res_list = [int(tok) for tok in resolutions.split(",") if tok.strip()]
    except ValueError:
        raise click.ClickException("resolutions must be comma-separated integers")
    if not res_list or min(res_list) < 1:
        raise click.ClickException("resolutions must be positive integers")
    cost = (
        StepCost.balanced(alpha, beta)
        if cost_kind == "bb"
        else StepCost.unbalanced(alpha, beta, delta)
    )
    grid = TimeGrid.uniform(num_intervals)
    rng = np.random.default_rng(seed)
    template = ForwardModel.template(grid, kmax=kmax)
    fm = ForwardModel(grid, template.freqs, template.window_sigma,
                      rng.standard_normal(template.data.shape))
    fields, _ = fm.eta(np.zeros_like(fm.data))
    lines = ["resolution,nodes_per_layer,edges,best_value,time_ms"]
    for res in res_list:
        mesh = uniform_mesh(grid, res, m)
        dp_shortest_paths(mesh, fields, cost, k=1)  # warm-up
        best = np.inf
        value = np.nan
        for _ in range(max(1, repeats)):
            tic = time.perf_counter()
            result = dp_shortest_paths(mesh, fields, cost, k=1)
            best = min(best, (time.perf_counter() - tic) * 1e3)
            value = result.best_value
        lines.append(
            f"{res},{mesh.layers[0].size},{mesh.edge_count()},{value:.12g},{best:.3f}"
        )
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
