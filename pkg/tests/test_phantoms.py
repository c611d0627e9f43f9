import numpy as np
import pytest
from scipy.integrate import quad

from pathfw import (
    ForwardModel,
    TimeGrid,
    ground_truth_measure,
    make_phantom,
    synthesize_data,
)


class TestMakePhantom:
    def test_balanced1_two_atoms(self):
        assert len(make_phantom("balanced1").atoms) == 2

    def test_balanced2_three_atoms(self):
        assert len(make_phantom("balanced2").atoms) == 3

    def test_unbalanced1_initial_mass(self):
        ph = make_phantom("unbalanced1")
        assert ph.atoms[0][1].mass_fn(0.0) == pytest.approx(0.5)
        assert ph.atoms[0][1].mass_fn(1.0) == pytest.approx(2.0)

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            make_phantom("nope")

    @pytest.mark.parametrize("name", ["unbalanced1", "unbalanced2"])
    def test_masses_integrate_to_one(self, name):
        for _, curve in make_phantom(name).atoms:
            integral, err = quad(curve.mass_fn, 0.0, 1.0, limit=200)
            assert integral == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize(
        "name", ["balanced1", "balanced2", "unbalanced1", "unbalanced2"]
    )
    def test_trajectories_stay_in_domain(self, name):
        ts = np.linspace(0, 1, 513)
        for _, curve in make_phantom(name).atoms:
            pts = np.array([curve.pos_fn(t) for t in ts])
            assert np.all(pts >= 0.0) and np.all(pts <= 1.0)
            masses = np.array([curve.mass_fn(t) for t in ts])
            assert np.all(masses >= 0.0) and np.all(masses <= 2.0)

    def test_ground_truth_weight_rescaling(self, grid21):
        gt = ground_truth_measure(make_phantom("unbalanced1"), grid21)
        assert gt.atoms[0].weight == pytest.approx(2.0)
        assert gt.atoms[1].weight == pytest.approx(1.5)
        assert np.all(gt.atoms[0].path.masses <= 1.0)
        # products reproduce the raw profiles
        t = grid21.times
        assert np.allclose(
            gt.atoms[0].weight * gt.atoms[0].path.masses, 0.5 * (1 + 3 * t * t)
        )


class TestSynthesizeData:
    def test_noiseless_residual_zero(self, grid21, balanced1_data):
        gt = ground_truth_measure(make_phantom("balanced1"), grid21)
        u = gt.measurements(balanced1_data)
        assert np.max(np.abs(u - balanced1_data.data)) <= 1e-12

    def test_noise_scaling_exact(self, grid21):
        template = ForwardModel.template(grid21, kmax=2)
        ph = make_phantom("balanced1")
        clean = synthesize_data(ph, template, 0.0, 0)
        for seed in (0, 1, 99):
            noisy = synthesize_data(ph, template, 0.2, seed)
            rel = np.linalg.norm(noisy.data - clean.data) / np.linalg.norm(clean.data)
            assert rel == pytest.approx(0.2, abs=1e-12)

    def test_seed_determinism(self, grid21):
        template = ForwardModel.template(grid21, kmax=2)
        ph = make_phantom("unbalanced1")
        a = synthesize_data(ph, template, 0.6, 7)
        b = synthesize_data(ph, template, 0.6, 7)
        assert np.array_equal(a.data, b.data)
        c = synthesize_data(ph, template, 0.6, 8)
        assert not np.array_equal(a.data, c.data)
