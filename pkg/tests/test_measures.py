import numpy as np
import pytest

from pathfw import (
    Atom,
    AtomicMeasure,
    FeasibleConfig,
    KnotPath,
    TimeGrid,
    consolidate,
    energy,
    ground_truth_measure,
    make_phantom,
)
from pathfw.measures import (
    measure_from_dict,
    measure_to_dict,
    support_consolidate,
)


def stationary_atom(grid, weight, mass, x, y):
    n = grid.num_knots
    return Atom(weight, KnotPath(grid, mass * np.ones(n), np.tile([x, y], (n, 1))))


class TestTimeSlice:
    def test_balanced1_initial_slice(self, grid21):
        m = ground_truth_measure(make_phantom("balanced1"), grid21)
        w, x = m.time_slice(0)
        assert np.allclose(sorted(w), [1.0, 1.0])
        assert np.allclose(x[0], [0.2, 0.2])
        assert np.allclose(x[1], [0.8, 0.2])

    def test_empty_measure(self, grid21):
        w, x = AtomicMeasure.empty(grid21).time_slice(0)
        assert w.size == 0 and x.shape == (0, 2)

    def test_weight_mass_product(self):
        g = TimeGrid.uniform(2)
        atom = stationary_atom(g, 2.0, 0.5, 0.4, 0.4)
        m = AtomicMeasure(g, [atom])
        w, _ = m.time_slice(1)
        assert w[0] == pytest.approx(1.0)

    def test_zero_weights_retained(self):
        g = TimeGrid.uniform(1)
        m = AtomicMeasure(g, [stationary_atom(g, 0.0, 1.0, 0.1, 0.1)])
        w, x = m.time_slice(0)
        assert w.size == 1 and w[0] == 0.0

    def test_linearity_in_weights(self, grid21, balanced1_data):
        m = ground_truth_measure(make_phantom("balanced1"), grid21)
        doubled = m.scaled(2.0)
        for j in (0, 10):
            w1, _ = m.time_slice(j)
            w2, _ = doubled.time_slice(j)
            assert np.allclose(w2, 2 * w1)


class TestEnergy:
    def test_zero_measure_energy(self, grid21, balanced1_data, bb_cost):
        rep = energy(AtomicMeasure.empty(grid21), balanced1_data, bb_cost)
        assert rep.fidelity == pytest.approx(0.5 * np.sum(balanced1_data.data**2))
        assert rep.regulariser == 0.0
        assert rep.total == rep.fidelity

    def test_ground_truth_energy(self, grid21, balanced1_data, bb_cost):
        m = ground_truth_measure(make_phantom("balanced1"), grid21)
        rep = energy(m, balanced1_data, bb_cost)
        assert rep.fidelity <= 1e-18
        assert rep.regulariser == pytest.approx(1.36, abs=1e-12)
        assert rep.total == pytest.approx(rep.fidelity + rep.regulariser)

    def test_weight_scaling_scales_regulariser(self, grid21, balanced1_data, bb_cost):
        m = ground_truth_measure(make_phantom("balanced1"), grid21)
        r1 = energy(m, balanced1_data, bb_cost)
        r2 = energy(m.scaled(0.25), balanced1_data, bb_cost)
        assert r2.regulariser == pytest.approx(0.25 * r1.regulariser)

    def test_convex_along_segments(self, grid21, balanced1_data, bb_cost):
        rng = np.random.default_rng(8)

        def random_measure(n_atoms):
            atoms = []
            for _ in range(n_atoms):
                masses = np.ones(grid21.num_knots)
                positions = rng.uniform(0.1, 0.9, (grid21.num_knots, 2))
                atoms.append(Atom(rng.uniform(0, 2), KnotPath(grid21, masses, positions)))
            return AtomicMeasure(grid21, atoms)

        for _ in range(5):
            m0, m1 = random_measure(2), random_measure(3)
            e0 = energy(m0, balanced1_data, bb_cost).total
            e1 = energy(m1, balanced1_data, bb_cost).total
            for lam in (0.25, 0.5, 0.75):
                mix = AtomicMeasure(
                    grid21,
                    [Atom(a.weight * (1 - lam), a.path) for a in m0.atoms]
                    + [Atom(a.weight * lam, a.path) for a in m1.atoms],
                )
                emix = energy(mix, balanced1_data, bb_cost).total
                assert emix <= (1 - lam) * e0 + lam * e1 + 1e-9


class TestFeasibility:
    def test_zero_measure(self, grid21):
        assert AtomicMeasure.empty(grid21).feasibility_margin(FeasibleConfig(0.1)) == 1.0

    def test_extreme_point_mass(self):
        g = TimeGrid.uniform(1)
        m = AtomicMeasure(g, [stationary_atom(g, 10.0, 1.0, 0.5, 0.5)])
        assert m.feasibility_margin(FeasibleConfig(0.1)) == pytest.approx(0.0)

    def test_partial(self):
        g = TimeGrid.uniform(1)
        m = AtomicMeasure(g, [stationary_atom(g, 5.0, 1.0, 0.5, 0.5)])
        assert m.feasibility_margin(FeasibleConfig(0.1)) == pytest.approx(0.5)

    def test_convex_combination_stays_feasible(self):
        g = TimeGrid.uniform(1)
        cfg = FeasibleConfig(0.1)
        m0 = AtomicMeasure(g, [stationary_atom(g, 8.0, 1.0, 0.2, 0.2)])
        m1 = AtomicMeasure(g, [stationary_atom(g, 10.0, 1.0, 0.8, 0.8)])
        for lam in (0.0, 0.3, 1.0):
            mix = AtomicMeasure(
                g,
                [Atom(a.weight * (1 - lam), a.path) for a in m0.atoms]
                + [Atom(a.weight * lam, a.path) for a in m1.atoms],
            )
            assert mix.feasibility_margin(cfg) >= -1e-12


class TestConsolidate:
    def test_duplicates_merge(self):
        g = TimeGrid.uniform(2)
        a = stationary_atom(g, 1.0, 1.0, 0.4, 0.4)
        b = stationary_atom(g, 2.0, 1.0, 0.4, 0.4)
        out = consolidate(AtomicMeasure(g, [a, b]), 1e-6)
        assert len(out) == 1
        assert out.atoms[0].weight == pytest.approx(3.0)

    def test_zero_weight_dropped(self):
        g = TimeGrid.uniform(2)
        m = AtomicMeasure(
            g,
            [stationary_atom(g, 0.0, 1.0, 0.2, 0.2), stationary_atom(g, 1.0, 1.0, 0.7, 0.7)],
        )
        assert len(consolidate(m, 1e-6)) == 1

    def test_distinct_atoms_unchanged(self):
        g = TimeGrid.uniform(2)
        m = AtomicMeasure(
            g,
            [stationary_atom(g, 1.0, 1.0, 0.2, 0.2), stationary_atom(g, 1.0, 1.0, 0.7, 0.7)],
        )
        out = consolidate(m, 1e-3)
        assert len(out) == 2
        assert out.total_weight == pytest.approx(2.0)

    def test_identical_merge_preserves_energy(self, grid21, balanced1_data, bb_cost):
        m = ground_truth_measure(make_phantom("balanced1"), grid21)
        doubled = AtomicMeasure(grid21, list(m.atoms) + [Atom(a.weight, a.path) for a in m.atoms])
        merged = consolidate(doubled, 0.0)
        assert len(merged) == 2
        e_doubled = energy(doubled, balanced1_data, bb_cost).total
        assert energy(merged, balanced1_data, bb_cost).total <= e_doubled + 1e-14


class TestSupportConsolidate:
    def test_profile_split_merges(self, grid21, unbalanced1_data, wfr_cost):
        truth = ground_truth_measure(make_phantom("unbalanced1"), grid21)
        # split the first atom's mass profile across two coincident atoms
        a = truth.atoms[0]
        frac = np.linspace(0.2, 0.8, grid21.num_knots)
        part1 = Atom(a.weight, KnotPath(grid21, a.path.masses * frac, a.path.positions))
        part2 = Atom(a.weight, KnotPath(grid21, a.path.masses * (1 - frac), a.path.positions))
        split = AtomicMeasure(grid21, [part1, part2, truth.atoms[1]])
        merged = support_consolidate(split, 1e-9)
        assert len(merged) == 2
        e_split = energy(split, unbalanced1_data, wfr_cost)
        e_merged = energy(merged, unbalanced1_data, wfr_cost)
        assert e_merged.fidelity == pytest.approx(e_split.fidelity, abs=1e-12)
        assert e_merged.total <= e_split.total + 1e-12

    def test_distinct_tracks_not_merged(self, grid21):
        truth = ground_truth_measure(make_phantom("unbalanced1"), grid21)
        assert len(support_consolidate(truth, 1e-2)) == 2


class TestSolutionJson:
    def test_round_trip(self, grid21, balanced1_data, bb_cost):
        m = ground_truth_measure(make_phantom("balanced1"), grid21)
        rep = energy(m, balanced1_data, bb_cost)
        d = measure_to_dict(m, phi0=0.1, report=rep)
        assert set(d) == {"times", "atoms", "phi0", "energy"}
        m2 = measure_from_dict(d)
        rep2 = energy(m2, balanced1_data, bb_cost)
        assert rep2.total == pytest.approx(rep.total, abs=1e-12)
