import numpy as np
import pytest

from granular_kinetics.restitution import RestitutionModel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=["elastic", "constant", "viscoelastic", "series"])
def any_model(request):
    return {
        "elastic": RestitutionModel.elastic(),
        "constant": RestitutionModel.constant(0.5),
        "viscoelastic": RestitutionModel.viscoelastic(0.2),
        # two-term truncation, admissible over the test grid [1e-4, 1e4]
        "series": RestitutionModel.series([0.2, 0.01]),
    }[request.param]


@pytest.fixture
def viscoelastic():
    return RestitutionModel.viscoelastic(0.2)
