import numpy as np
import pytest

import _builders


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="module")
def arm():
    return _builders.planar_arm()


@pytest.fixture(scope="module")
def humanoid():
    return _builders.humanoid()


@pytest.fixture(scope="module")
def walk_text():
    return _builders.walk_bvh()
