"""Spatiotemporal quenches of the 2D transverse-field Ising model on cylinders.

The package bundles a small but complete simulation chain: cylinder lattice
and Hamiltonian construction (`lattice`), an MPS/MPO tensor core (`mps`,
`mpo`), variational ground-state search (`dmrg`), time evolution (`tdvp`),
exact small-system oracles (`oracle`), the analytic Doppler cooling model
(`heatwave`), post-processing fits and collapses (`analysis`), and the
experiment drivers plus CLI/result store (`driver`, `config`, `store`,
`cli`).
"""

__version__ = "0.1.0"

from .lattice import CylinderLattice, ModelParams, front_profile, transverse_field
from .mps import Mps, truncated_svd
from .mpo import Mpo, MpoBuilder

__all__ = [
    "CylinderLattice",
    "ModelParams",
    "front_profile",
    "transverse_field",
    "Mps",
    "Mpo",
    "MpoBuilder",
    "truncated_svd",
    "__version__",
]
