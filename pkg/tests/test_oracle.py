import numpy as np
import pytest

from pathfw import StepCost, TimeGrid
from pathfw.oracle import (
    BruteForceSizeError,
    InfeasiblePathError,
    Mesh,
    MeshLayer,
    brute_force_oracle,
    dp_shortest_paths,
    random_mesh,
    uniform_mesh,
)

from conftest import random_fields


def random_instance(rng, max_T=3, max_nodes=6, product=False):
    T = int(rng.integers(0, max_T + 1))
    if T == 0:
        grid = TimeGrid(np.array([0.0]))
    else:
        interior = np.sort(rng.uniform(0.05, 0.95, size=T - 1))
        grid = TimeGrid(np.concatenate([[0.0], interior, [1.0]]))
    if product:
        mesh = random_mesh(grid, n=2, m=int(rng.integers(0, 3)), seed=int(rng.integers(2**31)))
    else:
        layers = []
        for _ in range(grid.num_knots):
            n = int(rng.integers(1, max_nodes + 1))
            layers.append(MeshLayer(rng.uniform(size=n), rng.uniform(size=(n, 2))))
        mesh = Mesh(grid, layers)
    _, fields = random_fields(grid, seed=int(rng.integers(2**31)))
    return mesh, fields


class TestMeshes:
    def test_random_mesh_balanced_masses(self):
        mesh = random_mesh(TimeGrid.uniform(3), n=2, m=0, seed=0)
        for layer in mesh.layers:
            assert np.all(layer.masses == 1.0)
            assert layer.size == 4

    def test_random_mesh_layer_sizes(self):
        mesh = random_mesh(TimeGrid.uniform(4), n=3, m=5, seed=1)
        assert all(layer.size == 5 * 9 for layer in mesh.layers)

    def test_random_mesh_layers_independent(self):
        mesh = random_mesh(TimeGrid.uniform(2), n=2, m=0, seed=2)
        assert not np.allclose(mesh.layers[0].positions, mesh.layers[1].positions)

    def test_random_mesh_deterministic(self):
        a = random_mesh(TimeGrid.uniform(2), 3, 2, seed=5)
        b = random_mesh(TimeGrid.uniform(2), 3, 2, seed=5)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.positions, lb.positions)
            assert np.array_equal(la.masses, lb.masses)

    def test_uniform_mesh_corner_case(self):
        mesh = uniform_mesh(TimeGrid.uniform(1), resolution=1, m=0)
        assert mesh.layers[0].size == 4

    def test_uniform_mesh_sizes(self):
        mesh = uniform_mesh(TimeGrid.uniform(1), resolution=16, m=0)
        assert mesh.layers[0].size == 289
        mesh = uniform_mesh(TimeGrid.uniform(1), resolution=2, m=10)
        levels = np.unique(mesh.layers[0].masses)
        assert levels.size == 11 and levels[0] == 0.0 and levels[-1] == 1.0


class TestDpOracle:
    def test_single_layer(self):
        grid = TimeGrid(np.array([0.0]))
        layer = MeshLayer(np.array([0.2, 1.0, 0.5]), np.array([[0.1, 0.1], [0.5, 0.5], [0.9, 0.9]]))
        mesh = Mesh(grid, [layer])
        _, fields = random_fields(grid, seed=3)
        res = dp_shortest_paths(mesh, fields, StepCost.balanced(0.5, 0.5), k=1)
        vals = layer.masses * fields[0].values(layer.positions)
        assert res.best_value == pytest.approx(float(vals.min()), abs=1e-14)

    def test_zero_field_bb_stationary(self):
        grid = TimeGrid.uniform(5)
        from pathfw import ForwardModel

        fm = ForwardModel.template(grid, kmax=1)
        fields, _ = fm.eta(np.zeros_like(fm.data))
        mesh = uniform_mesh(grid, 3, 0)
        res = dp_shortest_paths(mesh, fields, StepCost.balanced(0.5, 0.5), k=1)
        assert res.best_value == pytest.approx(0.5, abs=1e-14)
        assert np.allclose(res.best.positions, res.best.positions[0])

    @pytest.mark.parametrize("product", [False, True])
    def test_matches_brute_force(self, product):
        rng = np.random.default_rng(100 + product)
        checked = 0
        while checked < 60:
            mesh, fields = random_instance(rng, product=product)
            kind = rng.integers(0, 2)
            cost = (
                StepCost.balanced(0.5, 0.5)
                if kind
                else StepCost.unbalanced(0.3, 0.2, 0.1)
            )
            vmax = None if rng.integers(0, 2) else float(rng.uniform(0.4, 2.5))
            k = int(rng.integers(1, 4))
            try:
                dp = dp_shortest_paths(mesh, fields, cost, k, vmax)
            except InfeasiblePathError:
                with pytest.raises(InfeasiblePathError):
                    brute_force_oracle(mesh, fields, cost, k, vmax)
                continue
            bf = brute_force_oracle(mesh, fields, cost, k, vmax)
            assert len(dp.values) == len(bf.values)
            assert np.allclose(dp.values, bf.values, atol=1e-12, rtol=0)
            checked += 1

    def test_monotone_under_layer_superset(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            mesh, fields = random_instance(rng, max_T=3)
            cost = StepCost.unbalanced(0.3, 0.2, 0.1)
            base = dp_shortest_paths(mesh, fields, cost, 1).best_value
            j = int(rng.integers(0, mesh.num_layers))
            old = mesh.layers[j]
            bigger = MeshLayer(
                np.concatenate([old.masses, rng.uniform(size=3)]),
                np.vstack([old.positions, rng.uniform(size=(3, 2))]),
            )
            layers = list(mesh.layers)
            layers[j] = bigger
            grown = dp_shortest_paths(Mesh(mesh.grid, layers), fields, cost, 1).best_value
            assert grown <= base + 1e-12

    def test_k_equal_to_final_layer_gives_all_endpoint_minima(self):
        rng = np.random.default_rng(10)
        mesh, fields = random_instance(rng, max_T=2)
        cost = StepCost.balanced(0.5, 0.5)
        k = mesh.layers[-1].size
        dp = dp_shortest_paths(mesh, fields, cost, k)
        bf = brute_force_oracle(mesh, fields, cost, k)
        assert len(dp.values) == k
        assert np.allclose(np.sort(dp.values), dp.values)
        assert np.allclose(dp.values, bf.values, atol=1e-12)

    def test_oversized_k_returns_all(self):
        grid = TimeGrid(np.array([0.0]))
        layer = MeshLayer(np.ones(3), np.array([[0.1, 0.1], [0.5, 0.5], [0.9, 0.9]]))
        _, fields = random_fields(grid, seed=4)
        res = dp_shortest_paths(Mesh(grid, [layer]), fields, StepCost.balanced(1, 1), k=10)
        assert len(res.paths) == 3

    def test_infinite_vmax_equals_unset(self):
        rng = np.random.default_rng(11)
        mesh, fields = random_instance(rng, max_T=3)
        cost = StepCost.balanced(0.5, 0.5)
        a = dp_shortest_paths(mesh, fields, cost, 2, vmax=None)
        b = dp_shortest_paths(mesh, fields, cost, 2, vmax=np.inf)
        assert np.allclose(a.values, b.values, atol=0)

    def test_infeasible_vmax_raises(self):
        grid = TimeGrid.uniform(1)
        layers = [
            MeshLayer(np.ones(1), np.array([[0.0, 0.0]])),
            MeshLayer(np.ones(1), np.array([[1.0, 1.0]])),
        ]
        _, fields = random_fields(grid, seed=5)
        with pytest.raises(InfeasiblePathError):
            dp_shortest_paths(Mesh(grid, layers), fields, StepCost.balanced(1, 1), 1, vmax=0.1)

    def test_brute_force_size_guard(self):
        grid = TimeGrid.uniform(7)
        mesh = uniform_mesh(grid, 5, 0)  # 36^8 paths
        _, fields = random_fields(grid, seed=6)
        with pytest.raises(BruteForceSizeError):
            brute_force_oracle(mesh, fields, StepCost.balanced(1, 1), 1)

    def test_eta_cross_check_with_linearized_value(self, grid21, balanced1_data, bb_cost):
        from pathfw import AtomicMeasure, linearize

        lin = linearize(AtomicMeasure.empty(grid21), balanced1_data, bb_cost)
        mesh = uniform_mesh(grid21, 4, 0)
        res = dp_shortest_paths(mesh, lin.fields, bb_cost, 3)
        for path, value in zip(res.paths, res.values):
            assert lin.path_value(path) == pytest.approx(float(value), abs=1e-10)
