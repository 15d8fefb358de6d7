"""Weakly regularised point interactions in one dimension.

Scattering states of the regularised potential, the perturbative energy
series, the second-order self-energy and Bethe-ansatz reference solutions.
"""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.0.0"

from .errors import ConfigError, ConvergenceError, CSDualityError  # noqa: E402
from .regulator import ERF, TANH, PotentialParams  # noqa: E402
from .thermal import ThermalState  # noqa: E402

__all__ = ["__version__", "CSDualityError", "ConvergenceError", "ConfigError",
           "TANH", "ERF", "PotentialParams", "ThermalState"]
