import numpy as np
import pytest

from tflab.fields import VorticityField2D
from tflab.forcing import RngStream
from tflab.grid import make_grid


@pytest.fixture
def grid64():
    return make_grid(2, 64)


@pytest.fixture
def grid32():
    return make_grid(2, 32)


@pytest.fixture
def grid3d():
    return make_grid(3, 24)


@pytest.fixture
def stream():
    return RngStream(12345, 0)


def grid_x(grid):
    """Collocation coordinates along one axis."""
    return 2.0 * np.pi * np.arange(grid.size) / grid.size


def cos_x1(grid, amp=1.0):
    """Vorticity field amp*cos(x1)."""
    f = VorticityField2D.zero(grid)
    f.coeffs[1, 0] = f.coeffs[-1, 0] = amp / 2.0
    return f


def sin_sin(grid, amp=1.0):
    """Vorticity field amp*sin(x1)sin(x2), an eigenfunction of the Laplacian."""
    f = VorticityField2D.zero(grid)
    f.coeffs[1, 1] = f.coeffs[-1, -1] = -amp / 4.0
    f.coeffs[1, -1] = f.coeffs[-1, 1] = amp / 4.0
    return f
