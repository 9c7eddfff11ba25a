"""Classical pump spectral amplitude: construction, chirp, autocorrelation and SPM.

The pump amplitude ``beta(w)`` is sampled on the pump lattice of a
:class:`~twinbeam.grid.FrequencyGrid` and normalised so that
``sum |beta_j|^2 dw = E_p``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.linalg import eigh, toeplitz

from .errors import CoverageError, DomainError, ResolutionError
from .grid import SPEED_OF_LIGHT, FrequencyGrid, angular_frequency_to_wavelength

__all__ = [
    "PumpSpectrum",
    "PumpAutocorrelation",
    "gaussian_pump",
    "tabulated_pump",
    "load_pump_table",
    "apply_chirp",
    "dispersion_to_gdd",
    "autocorrelation",
    "propagate_spm",
]

PUMP_TABLE_HEADER = ("omega_rad_s", "magnitude", "phase_rad")


@dataclass(frozen=True, eq=False)
class PumpSpectrum:
    """Snapshot of the pump spectral amplitude at one position in the crystal.

    Args:
        grid: frequency grid whose pump lattice carries the samples
        amplitudes: complex samples in sqrt(J s), one per pump-lattice bin
        pulse_energy: pulse energy E_p in J
        z_position: distance from the input face in m
        chirp: spectral phase history, e.g. ``{"gdd_s2": ..., "tod_s3": ...}``
    """

    grid: FrequencyGrid
    amplitudes: np.ndarray
    pulse_energy: float
    z_position: float = 0.0
    chirp: dict = field(default_factory=dict)

    def __post_init__(self):
        amp = np.array(self.amplitudes, dtype=complex)
        if amp.shape != (self.grid.pump_size,):
            raise DomainError(
                f"pump amplitudes must have shape ({self.grid.pump_size},), got {amp.shape}")
        if not np.all(np.isfinite(amp)):
            raise DomainError("pump amplitudes contain non-finite values")
        if not np.isfinite(self.pulse_energy) or self.pulse_energy < 0:
            raise DomainError(f"pulse energy must be >= 0, got {self.pulse_energy}")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "pulse_energy", float(self.pulse_energy))
        object.__setattr__(self, "z_position", float(self.z_position))
        object.__setattr__(self, "chirp", dict(self.chirp))

    def energy(self) -> float:
        """Discrete norm ``sum |beta_j|^2 dw`` (J)."""
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.spacing)

    def replace(self, **changes) -> "PumpSpectrum":
        kw = dict(grid=self.grid, amplitudes=self.amplitudes, pulse_energy=self.pulse_energy,
                  z_position=self.z_position, chirp=self.chirp)
        kw.update(changes)
        return PumpSpectrum(**kw)

    def with_energy(self, pulse_energy: float) -> "PumpSpectrum":
        """Rescale to a new pulse energy, keeping the spectral shape."""
        if pulse_energy < 0:
            raise DomainError(f"pulse energy must be >= 0, got {pulse_energy}")
        if self.pulse_energy == 0:
            if pulse_energy == 0:
                return self
            raise DomainError("cannot rescale a zero-energy pump")
        scale = np.sqrt(pulse_energy / self.pulse_energy)
        return self.replace(amplitudes=self.amplitudes * scale, pulse_energy=pulse_energy)

    def rms_bandwidth(self) -> float:
        """Standard deviation of the normalised spectral intensity (rad/s)."""
        p = np.abs(self.amplitudes) ** 2
        if p.sum() == 0:
            return 0.0
        w = self.grid.pump_detunings
        mean = np.sum(w * p) / p.sum()
        return float(np.sqrt(np.sum((w - mean) ** 2 * p) / p.sum()))


@dataclass(frozen=True, eq=False)
class PumpAutocorrelation:
    """Frequency autocorrelation of the input-face pump.

    ``values[q + N - 1]`` holds ``eps(q dw)`` for lattice offsets
    ``q = -(N-1) .. N-1``, where N is the pump lattice size.
    """

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex)
        if vals.shape != (2 * self.grid.pump_size - 1,):
            raise DomainError("autocorrelation length does not match the pump lattice")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def pulse_energy(self) -> float:
        return float(self.values[self.grid.pump_size - 1].real)

    def at(self, offset):
        """``eps`` at integer lattice offsets (array-like)."""
        offset = np.asarray(offset)
        n = self.grid.pump_size
        if np.any(np.abs(offset) > n - 1):
            raise CoverageError("autocorrelation requested outside the pump lattice")
        return self.values[offset + n - 1]

    def matrix(self, size=None) -> np.ndarray:
        """Hermitian Toeplitz operator ``eps_hat[j, k] = eps((j - k) dw) dw``."""
        size = self.grid.pump_size if size is None else int(size)
        col = self.at(np.arange(size))
        row = self.at(-np.arange(size))
        return toeplitz(col, row) * self.grid.spacing

    @cached_property
    def _eigensystem(self):
        w, v = eigh(self.matrix())
        return w, v

    def evolve(self, amplitudes, gamma_spm, dz):
        """Apply ``exp(i gamma eps_hat dz)`` to pump-lattice amplitudes."""
        w, v = self._eigensystem
        return v @ (np.exp(1j * gamma_spm * dz * w) * (v.conj().T @ amplitudes))


def gaussian_pump(grid, pulse_energy, fwhm_bandwidth, center=None):
    """Transform-limited Gaussian pump.

    The spectral intensity ``|beta|^2`` is a Gaussian with the given full
    width at half maximum.

    Args:
        grid (FrequencyGrid): grid providing the pump lattice
        pulse_energy (float): E_p in J
        fwhm_bandwidth (float): intensity FWHM in rad/s
        center (float): pump centre angular frequency; defaults to the lattice centre

    Returns:
        PumpSpectrum: pump at the input face
    """
    if pulse_energy < 0 or not np.isfinite(pulse_energy):
        raise DomainError(f"pulse energy must be >= 0, got {pulse_energy}")
    if not fwhm_bandwidth > 0:
        raise DomainError(f"bandwidth must be positive, got {fwhm_bandwidth}")
    if fwhm_bandwidth < 3 * grid.spacing:
        raise ResolutionError(
            f"pump FWHM {fwhm_bandwidth:.3e} rad/s is below three grid spacings")
    offset = 0.0 if center is None else float(center) - grid.center_pump
    sigma = fwhm_bandwidth / (2.0 * np.sqrt(np.log(2.0)))
    shape = np.exp(-((grid.pump_detunings - offset) ** 2) / (2.0 * sigma**2))
    return _normalised(grid, shape.astype(complex), pulse_energy)


def _normalised(grid, shape, pulse_energy, chirp=None):
    norm = np.sum(np.abs(shape) ** 2) * grid.spacing
    if pulse_energy == 0:
        amp = np.zeros(grid.pump_size, dtype=complex)
    else:
        if norm == 0:
            raise CoverageError("pump shape vanishes on the pump lattice")
        amp = shape * np.sqrt(pulse_energy / norm)
    return PumpSpectrum(grid, amp, pulse_energy, 0.0, chirp or {})


def load_pump_table(path):
    """Read a pump table with header ``omega_rad_s, magnitude, phase_rad``.

    Returns:
        ndarray: shape (N, 3)
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise CoverageError(f"pump table {path} is empty")
    header = tuple(h.strip() for h in lines[0].split(","))
    if header != PUMP_TABLE_HEADER:
        raise DomainError(f"pump table header must be {', '.join(PUMP_TABLE_HEADER)}")
    data = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
    if data.shape[1] != 3:
        raise DomainError("pump table must have three columns")
    return data


def tabulated_pump(grid, samples, pulse_energy, edge_tolerance=1e-3):
    """Pump interpolated from tabulated magnitude and phase.

    Magnitude and unwrapped phase are interpolated linearly and separately.
    Outside the tabulated range the amplitude is zero, which is only accepted
    when the table itself has decayed at its edges.

    Args:
        grid (FrequencyGrid): target grid
        samples (array-like): rows of (omega in rad/s, magnitude, phase in rad)
        pulse_energy (float): energy after renormalisation (J)
        edge_tolerance (float): largest edge magnitude, relative to the peak,
            that may be truncated to zero

    Returns:
        PumpSpectrum: pump at the input face
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3 or len(data) < 2:
        raise DomainError("samples must be an (N >= 2, 3) table")
    omega, mag, phase = data.T
    if np.any(np.diff(omega) <= 0):
        raise DomainError("sample frequencies must be strictly increasing")
    if np.any(mag < 0):
        raise DomainError("sample magnitudes must be non-negative")
    lattice = grid.pump_frequencies
    lo, hi = lattice[0], lattice[-1]
    if omega[-1] < lo or omega[0] > hi:
        raise CoverageError("pump table does not overlap the pump lattice")
    peak = mag.max()
    inside = (omega >= lo) & (omega <= hi)
    if peak > 0:
        if np.any(mag[~inside] > edge_tolerance * peak):
            raise CoverageError("pump table carries significant power outside the pump lattice")
        needs_left = omega[0] > lo
        needs_right = omega[-1] < hi
        if (needs_left and mag[0] > edge_tolerance * peak) or (
                needs_right and mag[-1] > edge_tolerance * peak):
            raise CoverageError("pump table is truncated inside the pump lattice support")
    phase_u = np.unwrap(phase)
    m = np.interp(lattice, omega, mag, left=0.0, right=0.0)
    p = np.interp(lattice, omega, phase_u)
    return _normalised(grid, m * np.exp(1j * p), pulse_energy)


def dispersion_to_gdd(dispersion, wavelength):
    """Group delay dispersion from a delay-per-wavelength slope.

    With ``dT/dlambda = D`` the quadratic spectral phase coefficient is
    ``phi2 = -D lambda^2 / (2 pi c)``.

    Args:
        dispersion (float): D in s/m (1 fs/nm = 1e-6 s/m)
        wavelength (float): carrier wavelength in m

    Returns:
        float: phi2 in s^2
    """
    return -dispersion * wavelength**2 / (2.0 * np.pi * SPEED_OF_LIGHT)


def apply_chirp(pump, dispersion, cubic=0.0, wavelength=None):
    """Multiply the pump by ``exp(i (phi2 W^2 / 2 + phi3 W^3 / 6))``.

    Args:
        pump (PumpSpectrum): input pump
        dispersion (float): D in s/m; positive D delays longer wavelengths
        cubic (float): third-order phase coefficient phi3 in s^3
        wavelength (float): wavelength used to convert D; defaults to the pump carrier

    Returns:
        PumpSpectrum: chirped pump with unchanged bin magnitudes
    """
    if dispersion == 0 and cubic == 0:
        return pump
    lam = angular_frequency_to_wavelength(pump.grid.center_pump) if wavelength is None else wavelength
    phi2 = dispersion_to_gdd(dispersion, lam)
    w = pump.grid.pump_detunings
    phase = 0.5 * phi2 * w**2 + cubic * w**3 / 6.0
    chirp = dict(pump.chirp)
    chirp["gdd_s2"] = chirp.get("gdd_s2", 0.0) + phi2
    chirp["tod_s3"] = chirp.get("tod_s3", 0.0) + cubic
    return pump.replace(amplitudes=pump.amplitudes * np.exp(1j * phase), chirp=chirp)


def autocorrelation(pump):
    """Frequency autocorrelation ``eps(q) = sum_m conj(beta[m - q]) beta[m] dw``.

    Args:
        pump (PumpSpectrum): pump at the input face

    Returns:
        PumpAutocorrelation: values for every lattice offset difference
    """
    b = pump.amplitudes
    vals = np.correlate(b, b, mode="full") * pump.grid.spacing
    return PumpAutocorrelation(pump.grid, vals)


def propagate_spm(pump, autocorr, gamma_spm, dz):
    """Advance the pump by ``dz`` under self-phase modulation.

    The generator ``i gamma eps_hat`` is fixed along the crystal, so the step is
    the exact exponential, evaluated through the eigendecomposition of the
    Hermitian operator ``eps_hat``.

    Args:
        pump (PumpSpectrum): pump at position z
        autocorr (PumpAutocorrelation): autocorrelation of the input-face pump
        gamma_spm (float): SPM coupling in 1/(W m)
        dz (float): step in m, non-negative

    Returns:
        PumpSpectrum: pump at ``z + dz``
    """
    if dz < 0:
        raise DomainError(f"dz must be non-negative, got {dz}")
    if autocorr.grid.pump_size != pump.grid.pump_size:
        raise DomainError("autocorrelation and pump use different lattices")
    if gamma_spm == 0 or dz == 0:
        return pump.replace(z_position=pump.z_position + dz)
    amp = autocorr.evolve(pump.amplitudes, gamma_spm, dz)
    return pump.replace(amplitudes=amp, z_position=pump.z_position + dz)
