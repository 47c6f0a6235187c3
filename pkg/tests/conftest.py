import numpy as np
import pytest

from chaoslab.kernels import BiotSavartKernel, FourierKernel


@pytest.fixture(scope="session")
def biot_kernel():
    """Default periodized Biot-Savart kernel; table comes from the disk cache
    after the first build."""
    return BiotSavartKernel(grid_size=256)


@pytest.fixture(scope="session")
def sine_kernel_1d():
    """K(x) = sin(2 pi x) on the 1-torus."""
    return FourierKernel([[1.0]], [[0.0]], [[1.0]])


@pytest.fixture(scope="session")
def smooth_kernel_2d():
    """Band-limited divergence-free antisymmetric kernel, max |K| ~ 1.06."""
    return FourierKernel(
        [[0, 1], [1, 0]],
        [[0.0, 0.0], [0.0, 0.0]],
        [[0.75, 0.0], [0.0, 0.75]],
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
