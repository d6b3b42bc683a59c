"""Spectral numerics for the Dirac equation with Hartree-type nonlinearity.

Submodules: ``spinor`` (Dirac matrices), ``grid`` (periodic spectral grid and
Littlewood-Paley tools), ``decomp`` (half-wave projections and free flows),
``nullform`` (null-form symbols and bilinear operators), ``freewave``
(interaction-integral oracle and scaling scans), ``solver`` (time stepping,
Picard iteration, scattering diagnostics), ``suites``/``cli`` (checks and
command line).
"""

from .decomp import HalfWavePair, free_propagate, project, projector_symbol, split
from .grid import CapacityError, ContractViolation, Grid, SpinorField
from .nullform import DECOMPOSITION_CONSTANT, nullform_fourier, nullform_physical, q_symbol, b_symbol
from .freewave import ORACLE_CONSTANT
from .solver import SimConfig, evolve, picard_iterate, scattering_profile, step_etd

__version__ = "0.1.0"

__all__ = [
    "CapacityError", "ContractViolation", "DECOMPOSITION_CONSTANT", "Grid", "HalfWavePair", "ORACLE_CONSTANT",
    "SimConfig", "SpinorField", "b_symbol", "evolve", "free_propagate", "nullform_fourier", "nullform_physical",
    "picard_iterate", "project", "projector_symbol", "q_symbol", "scattering_profile", "split", "step_etd",
]
