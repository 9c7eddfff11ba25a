"""Shared angular-frequency grids for signal, idler and pump envelopes.

All field amplitudes live on per-bin form ``a_j = a(w_j) * sqrt(dw)`` so that the
continuum commutator becomes a Kronecker delta and discrete transfer blocks are
``M_jk = U(w_j, w_k) * dw``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .errors import DomainError

__all__ = [
    "SPEED_OF_LIGHT",
    "FrequencyGrid",
    "make_grid",
    "wavelength_to_angular_frequency",
    "angular_frequency_to_wavelength",
    "bandwidth_wavelength_to_angular",
    "default_span",
]


def _positive(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} must be positive and finite, got {x!r}")
    return arr


def wavelength_to_angular_frequency(wavelength):
    """Convert a vacuum wavelength to angular frequency, ``w = 2 pi c / lambda``.

    Args:
        wavelength (float or array): wavelength in metres

    Returns:
        float or array: angular frequency in rad/s
    """
    lam = _positive(wavelength, "wavelength")
    out = 2.0 * np.pi * SPEED_OF_LIGHT / lam
    return float(out) if out.ndim == 0 else out


def angular_frequency_to_wavelength(omega):
    """Inverse of :func:`wavelength_to_angular_frequency`.

    Args:
        omega (float or array): angular frequency in rad/s

    Returns:
        float or array: wavelength in metres
    """
    w = _positive(omega, "angular frequency")
    out = 2.0 * np.pi * SPEED_OF_LIGHT / w
    return float(out) if out.ndim == 0 else out


def bandwidth_wavelength_to_angular(delta_lambda, center_wavelength):
    """Small-bandwidth conversion ``dw = 2 pi c dlambda / lambda^2``."""
    dl = float(_positive(delta_lambda, "bandwidth"))
    lam = float(_positive(center_wavelength, "wavelength"))
    return 2.0 * np.pi * SPEED_OF_LIGHT * dl / lam**2


def default_span(*bandwidths, factor=8.0):
    """Grid span of ``factor`` times the largest of the supplied bandwidths (rad/s)."""
    if not bandwidths:
        raise DomainError("at least one bandwidth is required")
    return factor * float(max(_positive(b, "bandwidth") for b in bandwidths))


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform detuning grid shared by the signal and idler envelopes.

    The pump lives on a lattice with the same spacing that spans
    ``2 * pump_padding * n_points`` bins, so every sum frequency
    ``w_j + w_k`` of the field grid falls exactly on a pump bin.

    Args:
        n_points: number of field bins, even and at least 16
        center_signal: signal carrier angular frequency (rad/s)
        center_idler: idler carrier angular frequency (rad/s)
        spacing: bin spacing (rad/s)
        pump_padding: integer widening of the pump lattice beyond the minimum
    """

    n_points: int
    center_signal: float
    center_idler: float
    spacing: float
    pump_padding: int = 1

    def __post_init__(self):
        n = self.n_points
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
            raise DomainError(f"n_points must be an integer, got {n!r}")
        if n < 16 or n % 2:
            raise DomainError(f"n_points must be even and >= 16, got {n}")
        for name in ("center_signal", "center_idler", "spacing"):
            _positive(getattr(self, name), name)
        p = self.pump_padding
        if isinstance(p, bool) or not isinstance(p, (int, np.integer)) or p < 1:
            raise DomainError(f"pump_padding must be a positive integer, got {p!r}")
        object.__setattr__(self, "n_points", int(n))
        object.__setattr__(self, "pump_padding", int(p))
        for name in ("center_signal", "center_idler", "spacing"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def center_pump(self) -> float:
        return self.center_signal + self.center_idler

    @property
    def span(self) -> float:
        return self.spacing * (self.n_points - 1)

    @property
    def detunings(self) -> np.ndarray:
        """Detunings ``(j - n/2) * dw`` for j = 0..n-1."""
        return (np.arange(self.n_points) - self.n_points // 2) * self.spacing

    @property
    def signal_frequencies(self) -> np.ndarray:
        return self.center_signal + self.detunings

    @property
    def idler_frequencies(self) -> np.ndarray:
        return self.center_idler + self.detunings

    @property
    def signal_wavelengths(self) -> np.ndarray:
        return angular_frequency_to_wavelength(self.signal_frequencies)

    @property
    def idler_wavelengths(self) -> np.ndarray:
        return angular_frequency_to_wavelength(self.idler_frequencies)

    @property
    def pump_size(self) -> int:
        return 2 * self.pump_padding * self.n_points

    @property
    def pump_offsets(self) -> np.ndarray:
        """Integer pump-lattice offsets m, detuning ``m * dw`` from the pump carrier."""
        half = self.pump_padding * self.n_points
        return np.arange(-half, half)

    @property
    def pump_detunings(self) -> np.ndarray:
        return self.pump_offsets * self.spacing

    @property
    def pump_frequencies(self) -> np.ndarray:
        return self.center_pump + self.pump_detunings

    def pump_index(self, offset):
        """Array index of pump-lattice offset ``offset``."""
        return np.asarray(offset) + self.pump_padding * self.n_points

    def sum_frequency_indices(self) -> np.ndarray:
        """Pump-lattice indices of ``w_j + w_k`` as an n x n integer matrix."""
        j = np.arange(self.n_points)
        return self.pump_index(j[:, None] + j[None, :] - self.n_points)

    def nearest_bin(self, detuning) -> int:
        """Index of the field bin closest to ``detuning`` (rad/s)."""
        return int(np.argmin(np.abs(self.detunings - detuning)))

    def with_padding(self, pump_padding: int) -> "FrequencyGrid":
        return FrequencyGrid(self.n_points, self.center_signal, self.center_idler,
                             self.spacing, pump_padding)

    def to_dict(self) -> dict:
        return {
            "n_points": self.n_points,
            "center_signal_rad_s": self.center_signal,
            "center_idler_rad_s": self.center_idler,
            "center_pump_rad_s": self.center_pump,
            "spacing_rad_s": self.spacing,
            "pump_padding": self.pump_padding,
        }


def make_grid(center_signal_wavelength, center_idler_wavelength, span,
              n_points=256, pump_padding=1):
    """Build a grid centred on the given carrier wavelengths.

    Args:
        center_signal_wavelength (float): signal carrier wavelength (m)
        center_idler_wavelength (float): idler carrier wavelength (m)
        span (float): full detuning span covered by the field grid (rad/s)
        n_points (int): number of bins, even
        pump_padding (int): pump lattice widening factor

    Returns:
        FrequencyGrid: grid with spacing ``span / (n_points - 1)``
    """
    ws = wavelength_to_angular_frequency(center_signal_wavelength)
    wi = wavelength_to_angular_frequency(center_idler_wavelength)
    span = float(_positive(span, "span"))
    if isinstance(n_points, bool) or not isinstance(n_points, (int, np.integer)):
        raise DomainError(f"n_points must be an integer, got {n_points!r}")
    if n_points < 2:
        raise DomainError(f"n_points must be even and >= 16, got {n_points}")
    return FrequencyGrid(int(n_points), ws, wi, span / (n_points - 1), pump_padding)
