import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridlb.model import load_scenario, scale_to_load  # noqa: E402

TABLE2_RATES = [35, 46, 37, 28, 29, 30, 41, 32]
TABLE3_RATES = [6.672, 2.78, 3.336, 6.672, 5.004]
TABLE4_RATES = [35, 46, 37, 28, 29, 30, 41, 32, 35, 46, 40, 39, 41, 30, 41, 32]


@pytest.fixture(scope="session")
def tables23():
    return load_scenario("tables23")


@pytest.fixture(scope="session")
def tables23_02(tables23):
    return scale_to_load(tables23, 0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
