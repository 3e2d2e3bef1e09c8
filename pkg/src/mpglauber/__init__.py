"""Glauber dynamics of the Ising model on complete multipartite graphs."""

__version__ = "0.1.0"

from .partition import PartitionSpec, SpecError
from .spectral import SpectralData, build_matrix, perron, verify_identities, norm_bound_check

__all__ = [
    "PartitionSpec",
    "SpecError",
    "SpectralData",
    "build_matrix",
    "perron",
    "verify_identities",
    "norm_bound_check",
]
