"""Frozen Gaussian approximation with surface hopping (FGA-SH) for two-level
semiclassical Schroedinger equations, with a spectral reference solver."""
from .errors import (BoundaryContamination, ConfigError, DegenerateGap, EmptyField,
                     FgashError, HopProbabilityOverflow, IllConditionedZ, MeshMismatch,
                     MeshTooCoarse, MixedFinalTimes, NumericalError, TailTooLarge, ZeroField)
from .model import ModelKind, ModelPotential

__version__ = "0.1.0"
