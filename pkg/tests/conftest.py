import numpy as np
import pytest

from stquench.dmrg import DmrgSettings

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def tight_dmrg():
    """Settings that converge small systems to near machine precision."""
    return DmrgSettings(chi_schedule=(16, 32, 64), cutoff=1e-14,
                        energy_tol=1e-13, eig_tol=1e-14, max_sweeps=40,
                        min_sweeps=4)


def small_geometries(n_max=12):
    """Every lattice shape with at most n_max sites (cylinders for Ly >= 3)."""
    from stquench.lattice import CylinderLattice
    out = []
    for ly in range(1, n_max + 1):
        for lx in range(2, n_max + 1):
            if lx * ly > n_max:
                break
            out.append(CylinderLattice(lx, ly, y_periodic=ly >= 2))
    return out
