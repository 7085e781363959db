import numpy as np
import pytest
from hypothesis import settings

from harnackmc import models

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(params=["ou", "mult1d", "mult3d", "driftpert"])
def zoo_entry(request):
    return models.get(request.param)


@pytest.fixture
def ou_entry():
    return models.get("ou")


@pytest.fixture
def mult1d():
    return models.get("mult1d")


def ones_zeros(d):
    return np.ones(d), np.zeros(d)
