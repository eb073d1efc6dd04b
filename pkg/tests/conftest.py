import numpy as np
import pytest

from dualfront.eikonal import build_stencil, fmm_prescribed
from dualfront.metrics import uniform_metric_field


@pytest.fixture(scope="session", autouse=True)
def jit_warmup():
    """Compile the numba kernels once so timed tests measure the algorithm."""
    metric = uniform_metric_field((9, 9))
    for radius_bound in (1.0, 3.0, 7.0):
        fmm_prescribed(np.array([[4, 4]], dtype=np.int64), metric,
                       stencil=build_stencil(radius_bound))
    fmm_prescribed(np.array([[4, 4]], dtype=np.int64), metric,
                   phi=np.full((9, 9), np.inf))
