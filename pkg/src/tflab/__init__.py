"""tflab: pseudo-spectral laboratory for torus Euler flows and their
stochastic hyperviscous approximations."""

from .grid import ModeGrid, make_grid
from .fields import SobolevIndex, VelocityField, VorticityField2D, sobolev_norm, sobolev_norm_sq
from .forcing import NoiseSpectrum, RngStream, make_spectrum

__all__ = [
    "ModeGrid",
    "make_grid",
    "SobolevIndex",
    "VelocityField",
    "VorticityField2D",
    "sobolev_norm",
    "sobolev_norm_sq",
    "NoiseSpectrum",
    "RngStream",
    "make_spectrum",
]

__version__ = "0.1.0"
