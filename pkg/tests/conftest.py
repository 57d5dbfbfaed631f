import numpy as np
import pytest

from sparlow import _backend

BACKENDS = ["python"] + (["cython"] if _backend.compiled_cd_batch is not None else [])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param
