import numpy as np
import pytest

from pathfw import ForwardModel, StepCost, TimeGrid, make_phantom, synthesize_data


@pytest.fixture(scope="session")
def grid21():
    return TimeGrid.uniform(21)


@pytest.fixture(scope="session")
def bb_cost():
    return StepCost.balanced(0.5, 0.5)


@pytest.fixture(scope="session")
def wfr_cost():
    return StepCost.unbalanced(0.5, 0.5, 0.1)


@pytest.fixture(scope="session")
def balanced1_data(grid21):
    template = ForwardModel.template(grid21, kmax=3)
    return synthesize_data(make_phantom("balanced1"), template, 0.0, 0)


@pytest.fixture(scope="session")
def unbalanced1_data(grid21):
    template = ForwardModel.template(grid21, kmax=3)
    return synthesize_data(make_phantom("unbalanced1"), template, 0.0, 0)


def random_fields(grid, seed, kmax=2):
    """Dual fields of a random-data model at the zero measure."""
    rng = np.random.default_rng(seed)
    template = ForwardModel.template(grid, kmax=kmax)
    fm = ForwardModel(
        grid, template.freqs, template.window_sigma,
        rng.standard_normal(template.data.shape),
    )
    fields, _ = fm.eta(np.zeros_like(fm.data))
    return fm, fields
