import os

import numpy as np
import pytest

os.environ.setdefault("KINKLAP_THREADS", "4")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
