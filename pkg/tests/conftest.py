import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ddsim.errors import ErrorParameters

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def paper_params() -> ErrorParameters:
    """The reference parameter set used throughout."""
    return ErrorParameters()


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240517)
