"""Simulation of high-gain twin-beam sources from parametric down-conversion.

Transfer functions of a nonlinear crystal are obtained by propagating the
signal/idler Bogoliubov generator section by section, including pump
self-phase modulation and cross-phase modulation. Companion modules emulate
seeded (stimulated-emission) scans, decompose the transfer functions into
Schmidt modes and fit model parameters to scan data.
"""

from .errors import TwinBeamError
from .grid import FrequencyGrid, make_grid
from .propagator import CrystalSpec, TransferMatrices, propagate
from .pump import PumpSpectrum, gaussian_pump
from .decomposition import SchmidtData, schmidt_decompose
from .emulator import SeedScanConfig, SeedScanResult, run_seed_scan

__version__ = "0.1.0"

__all__ = [
    "TwinBeamError",
    "FrequencyGrid",
    "make_grid",
    "CrystalSpec",
    "TransferMatrices",
    "propagate",
    "PumpSpectrum",
    "gaussian_pump",
    "SchmidtData",
    "schmidt_decompose",
    "SeedScanConfig",
    "SeedScanResult",
    "run_seed_scan",
    "__version__",
]
