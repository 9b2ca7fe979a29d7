import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture(scope="session")
def qpsk():
    from vbidet.constellation import make_qam

    return make_qam(4)


@pytest.fixture(scope="session")
def qam16():
    from vbidet.constellation import make_qam

    return make_qam(16)
