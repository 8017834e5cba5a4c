import numpy as np
import pytest

from stochreg import PriorSpec, SolverOptions, SpectrumSpec


@pytest.fixture(scope="session")
def rademacher():
    return PriorSpec.rademacher()


@pytest.fixture(scope="session")
def gaussian():
    return PriorSpec.gaussian(1.0)


@pytest.fixture(scope="session")
def tight_opts():
    return SolverOptions(tol=1e-12)


@pytest.fixture(scope="session")
def mix2_spectrum():
    return SpectrumSpec.parse("0.9:0.5,0.1:0.5")
