import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=100, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid6():
    from palatini_pca.lattice import Grid

    return Grid((6, 6, 6), 2 * np.pi / 6)


@pytest.fixture(scope="session")
def grid4():
    from palatini_pca.lattice import Grid

    return Grid((4, 4, 4), 2 * np.pi / 4)
