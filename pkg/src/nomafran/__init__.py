"""Seedable simulator for NOMA-enabled fog radio access networks."""

from .errors import (ConfigParseError, ConfigurationError, DatasetError, ParameterError, ShapeError,
                     SimulationError, TrainingError, UntrainedModelError)

__version__ = "0.1.0"
