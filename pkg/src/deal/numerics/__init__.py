"""Dense numerics: deterministic SVD, norms and seeded random matrices."""
from ._backend import BACKEND
from .linalg import SvdResult, as_matrix, complete_basis, frobenius, p_norm_pow, svd
from .rng import Rng, gaussian_matrix

__all__ = [
    "BACKEND",
    "Rng",
    "SvdResult",
    "as_matrix",
    "complete_basis",
    "frobenius",
    "gaussian_matrix",
    "p_norm_pow",
    "svd",
]
