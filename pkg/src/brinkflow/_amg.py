"""Deterministic algebraic-multigrid setup.

pyamg estimates spectral radii with random start vectors from the legacy
global numpy RNG, which would make solver iterates (and hence report
bytes) vary run to run.  Pinning the seed during setup and restoring the
caller's RNG state afterwards makes every hierarchy reproducible.
"""

import numpy as np
import pyamg


def smoothed_aggregation(A, **kwargs):
    state = np.random.get_state()
    np.random.seed(1729)
    try:
        return pyamg.smoothed_aggregation_solver(A, **kwargs)
    finally:
        np.random.set_state(state)
