import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nueg.gcmeasure import RieszCost
from nueg.periodic import Lattice, PeriodicField


@pytest.fixture
def step_field():
    """Two-level period-1 step inhomogeneity on the integer lattice."""
    return PeriodicField(Lattice([[1.0]]), np.array([0.5, 0.5, 1.5, 1.5]))


@pytest.fixture
def sin2_field():
    x = (np.arange(8) + 0.5) / 8.0
    return PeriodicField(Lattice([[1.0]]), np.sin(np.pi * x) ** 2)


@pytest.fixture
def cost_1d():
    return RieszCost(1, 0.5)


@pytest.fixture
def cost_3d():
    return RieszCost(3, 1.0)
