import numpy as np
import pytest

from homwave.correctors import build_corrector_set, oracle_1d
from homwave.media import build_grid, sample_periodic


@pytest.fixture(scope="session")
def grid512():
    return build_grid(1, 1.0, 512)


@pytest.fixture(scope="session")
def laminate(grid512):
    return sample_periodic(grid512, "laminate")


@pytest.fixture(scope="session")
def cosine(grid512):
    return sample_periodic(grid512, "cosine")


@pytest.fixture(scope="session")
def identity_field(grid512):
    return sample_periodic(grid512, "constant")


@pytest.fixture(scope="session")
def laminate_set(laminate):
    return build_corrector_set(laminate, N=4)


@pytest.fixture(scope="session")
def cosine_set(cosine):
    return build_corrector_set(cosine, N=4)


@pytest.fixture(scope="session")
def identity_set(identity_field):
    return build_corrector_set(identity_field, N=4)


@pytest.fixture(scope="session")
def laminate_oracle(laminate):
    return oracle_1d(laminate, N=4)


@pytest.fixture(scope="session")
def cosine_oracle(cosine):
    return oracle_1d(cosine, N=4)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
