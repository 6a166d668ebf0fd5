"""Determinant quantum Monte Carlo for fidelities of dissipative lattice fermions.

Computes two trace fidelities of number-conserving hopping fermions under
local number-operator dephasing on a periodic square lattice: the overlap of
the dissipative evolution with the reversed coherent evolution ("echo") and
the plain trace of the evolution ("purity").  Both are estimated sign-free
by telescoping determinant ratios from an exactly known zero-coupling anchor.
"""

__version__ = "0.1.0"

from .lattice import LatticeSpec, adjacency_matrix, site_coords, site_index
from .model import FieldConfig, ModelParams, lambda_from_gamma

__all__ = [
    "LatticeSpec",
    "adjacency_matrix",
    "site_index",
    "site_coords",
    "ModelParams",
    "FieldConfig",
    "lambda_from_gamma",
    "__version__",
]
