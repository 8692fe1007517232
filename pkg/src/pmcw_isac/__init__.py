"""Pilot-free PMCW-NOMA integrated sensing and communication simulator."""

from .config import ScenarioConfig
from .errors import (ConfigError, EstimationError, NondeterminismError, ShapeError,
                     TrainingDivergedError)

__version__ = "0.1.0"

__all__ = ["ScenarioConfig", "ConfigError", "EstimationError", "NondeterminismError", "ShapeError",
           "TrainingDivergedError", "__version__"]
