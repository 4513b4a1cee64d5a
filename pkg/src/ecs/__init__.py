"""Eigenvalues and eigenfunctions of the elliptic Calogero-Sutherland model.

Modules: ``elliptic`` (special functions), ``lattice`` (free energies, shifts,
gate constants), ``lagrange`` (series reversion), ``solver`` (perturbative,
implicit, explicit and degenerate methods), ``oracle`` (truncated-matrix
reference), ``eigenfunction`` (quadrature and position-space checks),
``verify`` (identity and bound suite) and ``cli``.
"""
from .elliptic import EllipticConfig, Nome
from .lattice import CoefficientMap, HypothesisConstants, ModelParams, ResonanceEncountered, free_energy
from .solver import (
    SpectralResult,
    TruncationPolicy,
    degenerate_solve,
    explicit_solve,
    implicit_solve,
    perturbative_solve,
)

__version__ = "0.1.0"

__all__ = [
    "CoefficientMap",
    "EllipticConfig",
    "HypothesisConstants",
    "ModelParams",
    "Nome",
    "ResonanceEncountered",
    "SpectralResult",
    "TruncationPolicy",
    "degenerate_solve",
    "explicit_solve",
    "free_energy",
    "implicit_solve",
    "perturbative_solve",
]
