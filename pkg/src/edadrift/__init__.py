"""Genetic drift laboratory for univariate estimation-of-distribution algorithms.

The package simulates neutral-bit frequency processes of PBIL, UMDA,
lambda-MMAS, CE and the cGA, computes exact hitting times on the finite
frequency grids, and checks drift bounds, moment identities and stochastic
dominance at desk scale.
"""

from .errors import (
    DomainError,
    ExperimentFailed,
    InfeasibleSizeError,
    InsufficientDataError,
    InvalidSpecError,
    SingularSystemError,
)
from .rng import StreamFamily, replica_stream

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "ExperimentFailed",
    "InfeasibleSizeError",
    "InsufficientDataError",
    "InvalidSpecError",
    "SingularSystemError",
    "StreamFamily",
    "replica_stream",
    "__version__",
]
