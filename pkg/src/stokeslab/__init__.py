"""stokeslab: transition layers, calibrations and cut-metric potentials
for divergence-free fields on a periodic cylinder."""

from . import cylinder, entropy, metrics, poly, potentials, profiles
from ._accel import backend_name, set_backend

__version__ = "0.1.0"

__all__ = [
    "cylinder",
    "entropy",
    "metrics",
    "poly",
    "potentials",
    "profiles",
    "backend_name",
    "set_backend",
    "__version__",
]
