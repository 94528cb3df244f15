import os

# Keep BLAS single-threaded before numpy loads anywhere: reproducible
# reductions and no thread contention with worker processes.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np
import pytest

from nvbath import lattice


@pytest.fixture(scope="session")
def bath_10ppm():
    """One accepted 10 ppm bath with a typical coupling strength."""
    spec = lattice.LatticeSpec(concentration_ppm=10.0, target_spin_count=80, seed=6)
    return lattice.place_bath_spins(spec)


@pytest.fixture(scope="session")
def small_bath():
    """Small bath (J=6) for fast dynamics and oracle tests."""
    spec = lattice.LatticeSpec(concentration_ppm=10.0, target_spin_count=6, seed=3)
    return lattice.place_bath_spins(spec)


def frozen_copy(config):
    """Same geometry with intra-bath couplings zeroed (static bath)."""
    return lattice.BathConfiguration(
        positions=config.positions,
        jt_axes=config.jt_axes,
        couplings_system_bath=config.couplings_system_bath,
        couplings_intra_bath=np.zeros_like(config.couplings_intra_bath),
        b_rms=config.b_rms,
        seed=config.seed,
        concentration_ppm=config.concentration_ppm,
        n_cells_per_axis=config.n_cells_per_axis,
    )
