"""Fourier-Galerkin simulation and diagnostics for micropolar fluids with
inertial axis symmetry on the periodic box."""

from .core import PhysParams, State, Tangent
from .errors import BandError, BlowUpError, ConfigurationError, MicropolarError, NumericalError
from .fields import Grid, SpectralField
from .galerkin import GalerkinConfig, Trajectory, initial_data, simulate, step
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BandError",
    "BlowUpError",
    "ConfigurationError",
    "GalerkinConfig",
    "Grid",
    "MicropolarError",
    "NumericalError",
    "PhysParams",
    "SpectralField",
    "State",
    "Tangent",
    "Trajectory",
    "initial_data",
    "simulate",
    "step",
]
