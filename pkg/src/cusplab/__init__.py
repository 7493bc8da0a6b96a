"""Spectral laboratory for Neumann Laplacians on cusped domains and the rotational cusp manifold."""

__version__ = "0.1.0"

from .linalg import (  # noqa: F401
    EigenPairSet,
    EigenSolveError,
    QuadratureError,
    QuadratureResult,
    SparseSymmetricForm,
    adaptive_quad,
    rayleigh_min,
    solve_generalized,
)
