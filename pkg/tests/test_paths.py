import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathfw import (
    ContinuousPath,
    GridMismatchError,
    KnotPath,
    MassPos,
    TimeGrid,
    flat_metric,
    path_distance,
    sample_phantom_path,
)


def mp(mass, *pos):
    return MassPos(mass, np.array(pos, dtype=float))


def flat_metric_sup(a: MassPos, b: MassPos, n: int = 801) -> float:
    """Independent oracle: sup of r1 c1 - r2 c2 over the admissible c-grid."""
    sep = float(np.linalg.norm(a.pos - b.pos))
    c = np.linspace(-1.0, 1.0, n)
    c1, c2 = np.meshgrid(c, c, indexing="ij")
    ok = np.abs(c1 - c2) <= sep
    vals = a.mass * c1 - b.mass * c2
    return float(np.max(vals[ok]))


class TestFlatMetric:
    def test_identical_points(self):
        a = mp(1.0, 0.3, 0.3)
        assert flat_metric(a, a) == 0.0

    def test_opposite_signs(self):
        a = mp(1.0, 0.3, 0.2)
        b = MassPos(-1.0, a.pos)
        assert flat_metric(a, b) == 2.0

    def test_second_branch(self):
        assert flat_metric(mp(1.0, 0.0, 0.0), mp(1.0, 0.5, 0.0)) == pytest.approx(0.5)

    def test_matches_sup_characterisation(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            a = MassPos(rng.uniform(-1, 1), rng.uniform(0, 1, 2))
            b = MassPos(rng.uniform(-1, 1), rng.uniform(0, 1, 2))
            assert flat_metric(a, b) == pytest.approx(
                flat_metric_sup(a, b), abs=6e-3
            )

    @settings(max_examples=300, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.floats(-1, 1, allow_nan=False),
                st.floats(0, 1, allow_nan=False),
                st.floats(0, 1, allow_nan=False),
            ),
            min_size=3,
            max_size=3,
        )
    )
    def test_metric_axioms(self, triple):
        a, b, c = (mp(*t) for t in triple)
        dab, dba = flat_metric(a, b), flat_metric(b, a)
        assert dab == dba
        assert dab >= 0.0
        assert flat_metric(a, c) <= dab + flat_metric(b, c) + 1e-12

    def test_zero_only_on_quotient(self):
        # zero mass makes the position irrelevant
        a, b = mp(0.0, 0.1, 0.1), mp(0.0, 0.9, 0.9)
        assert flat_metric(a, b) == 0.0
        assert flat_metric(mp(0.5, 0.1, 0.1), mp(0.5, 0.1, 0.1)) == 0.0


class TestTimeGrid:
    def test_uniform(self):
        g = TimeGrid.uniform(21)
        assert g.num_intervals == 21
        assert g.times[0] == 0.0 and g.times[-1] == 1.0
        assert np.allclose(g.dt, 1.0 / 21)

    def test_rejects_bad_grids(self):
        with pytest.raises(ValueError):
            TimeGrid(np.array([0.0, 0.5, 0.4, 1.0]))
        with pytest.raises(ValueError):
            TimeGrid(np.array([0.1, 1.0]))

    def test_single_knot_allowed(self):
        assert TimeGrid(np.array([0.0])).num_intervals == 0


class TestPathDistance:
    def test_identical(self):
        g = TimeGrid.uniform(3)
        p = KnotPath(g, np.ones(4), np.tile([0.2, 0.3], (4, 1)))
        assert path_distance(p, p) == 0.0

    def test_single_mass_difference(self):
        g = TimeGrid.uniform(4)
        pos = np.tile([0.5, 0.5], (5, 1))
        p = KnotPath(g, np.ones(5), pos)
        masses = np.ones(5)
        masses[3] = 0.5
        q = KnotPath(g, masses, pos)
        assert path_distance(p, q) == pytest.approx(0.5)

    def test_grid_mismatch_raises(self):
        p = KnotPath(TimeGrid.uniform(2), np.ones(3), np.zeros((3, 2)))
        q = KnotPath(TimeGrid.uniform(3), np.ones(4), np.zeros((4, 2)))
        with pytest.raises(GridMismatchError):
            path_distance(p, q)


class TestSamplePhantomPath:
    def test_diagonal_curve_midpoint(self):
        curve = ContinuousPath(
            lambda t: 1.0, lambda t: np.array([0.2 + 0.6 * t, 0.2 + 0.6 * t])
        )
        g = TimeGrid(np.array([0.0, 0.5, 1.0]))
        p = sample_phantom_path(curve, g)
        assert np.allclose(p.positions[1], [0.5, 0.5])

    def test_growing_mass_reaches_two(self):
        curve = ContinuousPath(
            lambda t: 0.5 * (1 + 3 * t * t), lambda t: np.array([0.5, 0.5])
        )
        p = sample_phantom_path(curve, TimeGrid.uniform(4))
        assert p.masses[-1] == pytest.approx(2.0)

    def test_constant_mass_stays_constant(self):
        curve = ContinuousPath(lambda t: 1.0, lambda t: np.array([0.3, 0.7]))
        p = sample_phantom_path(curve, TimeGrid.uniform(7))
        assert np.all(p.masses == 1.0)

    def test_out_of_domain_position_raises(self):
        curve = ContinuousPath(lambda t: 1.0, lambda t: np.array([0.5 + t, 0.5]))
        with pytest.raises(ValueError):
            sample_phantom_path(curve, TimeGrid.uniform(3))
