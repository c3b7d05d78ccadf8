import sys
from pathlib import Path

import numpy as np
import pytest

# Fix import path for running pytest from anywhere
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from src.core import BathSpec, ModelParams, TimeGrid


@pytest.fixture
def params():
    """Reference low-temperature parameters: x = 0.05, gamma0 = 0.01 omega0."""
    return ModelParams.from_x(0.05, 0.01)


@pytest.fixture
def zero_t_params():
    return ModelParams.from_x(0.0, 0.01)


@pytest.fixture
def grid():
    return TimeGrid.uniform(6.0, 0.05)


@pytest.fixture
def single_mode_bath():
    """One resonant mode at zero temperature: vacuum Rabi oscillations."""
    return BathSpec(np.array([1.0]), np.array([0.05]), np.inf)
