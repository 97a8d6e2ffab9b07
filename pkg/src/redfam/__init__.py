"""Family-based reliability analysis of software protection mechanisms.

A control loop is described as an error-propagation model; every block may be
protected by comparison, voting or sparing.  The symbolic engine analyses all
protection combinations at once, the explicit engine one at a time.
"""
from importlib import resources

from .model import (Configuration, FamilyModel, Mechanism, ModelError, SparingMode,
                    enumerate_configs, load_model, parse_model, reset_value_optimization)

__version__ = "0.1.0"


def example_path(name: str):
    """Path of a shipped example model or cost file, e.g. ``"pid.fam"``."""
    return resources.files(__name__).joinpath("models", name)


__all__ = [
    "Configuration", "FamilyModel", "Mechanism", "ModelError", "SparingMode",
    "enumerate_configs", "example_path", "load_model", "parse_model",
    "reset_value_optimization", "__version__",
]
