import numpy as np
import pytest

from renewalsim import (
    GStatistic,
    IncrementLaw,
    PerturbedWalkModel,
    QuadraticSpec,
    StaggeredExponentialModel,
    StationarySpec,
    VectorLaw,
)


@pytest.fixture(scope="session")
def exp_law():
    return IncrementLaw.exponential(1.0)


@pytest.fixture(scope="session")
def tm1_model(exp_law):
    """Scalar exponential(1) walk, Y = X - 1, Q = 1/2, centered geometric
    moving-average perturbation with beta = 1/2, no residual."""
    return PerturbedWalkModel(
        increment_law=exp_law,
        vector_law=VectorLaw.centered_x(),
        stationary=StationarySpec.geometric_ma("identity", 0.5).centered(exp_law),
        quadratic=QuadraticSpec(np.array([[0.5]])),
    )


@pytest.fixture(scope="session")
def plain_exp_model(exp_law):
    return PerturbedWalkModel(increment_law=exp_law)


@pytest.fixture(scope="session")
def fwci_model():
    return StaggeredExponentialModel(arrival_rate=1.0, theta=1.0,
                                     g=GStatistic.fixed_width_ci())


@pytest.fixture(scope="session")
def lrt_model():
    return StaggeredExponentialModel(arrival_rate=1.0, theta=2.0,
                                     g=GStatistic.repeated_lrt())
