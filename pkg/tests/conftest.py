import os

import numpy as np
import pytest

from qfcusum import Dataset


@pytest.fixture(scope="session", autouse=True)
def _cache_dir(tmp_path_factory):
    # keep critical-value tables out of the user's home during tests
    if "QFCUSUM_CACHE_DIR" not in os.environ:
        os.environ["QFCUSUM_CACHE_DIR"] = str(tmp_path_factory.mktemp("cv_cache"))
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, n=40, p=5, s=2, noise=1.0):
    x = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:s] = rng.normal(0, 2, s)
    y = x @ beta + noise * rng.standard_normal(n)
    return Dataset(y=y, x=x)
