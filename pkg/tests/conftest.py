import numpy as np
import pytest

from structwalk import generate_er, generate_triad_circle


@pytest.fixture(scope="session")
def er50():
    return generate_er(50, 6 / 50, seed=11)


@pytest.fixture(scope="session")
def triad100():
    return generate_triad_circle(100)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
