"""Coupled-mode propagation of signal and idler through a nonlinear crystal.

The stacked vector ``[a_s; a_i^dagger]`` obeys ``d/dz v = G(z) v`` with

    G = [[ i(D_s + X_s),   i B          ],
         [ -i conj(B),    -i conj(D_i + X_i) ]]

where ``D`` holds the linear phase mismatch, ``B`` the pump-driven pair
coupling and ``X`` the cross-phase modulation kernel. The crystal is cut into
sections with a constant generator each, and the section exponentials are
multiplied in order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from .errors import CoverageError, DomainError, NumericError
from .grid import FrequencyGrid
from .pump import PumpAutocorrelation, PumpSpectrum, autocorrelation

__all__ = [
    "EffectiveTopHat",
    "ExplicitPoling",
    "GaussianProfile",
    "CrystalSpec",
    "TransferMatrices",
    "build_section_generator",
    "propagate",
    "propagate_chi2_only",
    "bogoliubov_residuals",
    "GAUSSIAN_PROFILE_GAMMA",
]

GAUSSIAN_PROFILE_GAMMA = 0.193


@dataclass(frozen=True)
class EffectiveTopHat:
    """Uniform effective nonlinearity ``g = 1`` over the whole crystal."""

    kind = "top_hat"

    def window(self, length):
        return -0.5 * length, 0.5 * length

    def segments(self, length, n_sections):
        z0, _ = self.window(length)
        dz = length / n_sections
        starts = z0 + dz * np.arange(n_sections)
        return starts, np.full(n_sections, dz), np.ones(n_sections)

    def mismatch_offset(self):
        return 0.0

    def profile(self, z, length):
        z = np.asarray(z, dtype=float)
        return np.where(np.abs(z) <= 0.5 * length, 1.0, 0.0)


@dataclass(frozen=True)
class ExplicitPoling:
    """Periodic poling with domains of sign +1 and -1.

    Args:
        period: poling period in m
        duty: fraction of each period with positive sign
        phase_mismatch: constant wave-vector mismatch compensated by the
            poling (1/m); defaults to ``2 pi / period`` (first-order QPM)
    """

    period: float
    duty: float = 0.5
    phase_mismatch: float | None = None

    kind = "explicit"

    def __post_init__(self):
        if not self.period > 0:
            raise DomainError(f"poling period must be positive, got {self.period}")
        if not 0 < self.duty < 1:
            raise DomainError(f"duty cycle must lie in (0, 1), got {self.duty}")

    def window(self, length):
        return -0.5 * length, 0.5 * length

    def mismatch_offset(self):
        if self.phase_mismatch is None:
            return 2.0 * np.pi / self.period
        return float(self.phase_mismatch)

    def walls(self, length):
        """Domain boundaries, in centred coordinates, including both faces."""
        z0, z1 = self.window(length)
        up = self.duty * self.period
        n_periods = int(math.ceil(length / self.period)) + 1
        k = np.arange(n_periods)
        inner = np.sort(np.concatenate([z0 + k * self.period, z0 + k * self.period + up]))
        inner = inner[(inner > z0) & (inner < z1)]
        # Drop walls that coincide with the exit face up to rounding.
        inner = inner[np.abs(inner - z1) > 1e-12 * length]
        return np.concatenate([[z0], inner, [z1]])

    def profile(self, z, length):
        z0, z1 = self.window(length)
        z = np.asarray(z, dtype=float)
        phase = np.mod(z - z0, self.period)
        sign = np.where(phase < self.duty * self.period, 1.0, -1.0)
        return np.where((z >= z0) & (z <= z1), sign, 0.0)

    def segments(self, length, n_sections):
        walls = self.walls(length)
        widths = np.diff(walls)
        per_domain = max(1, int(math.ceil(n_sections / len(widths))))
        starts, dzs, signs = [], [], []
        for a, w in zip(walls[:-1], widths):
            g = float(self.profile(a + 0.5 * w, length))
            for s in range(per_domain):
                starts.append(a + s * w / per_domain)
                dzs.append(w / per_domain)
                signs.append(g)
        return np.array(starts), np.array(dzs), np.array(signs)


@dataclass(frozen=True)
class GaussianProfile:
    """Gaussian nonlinearity ``g(z) = (pi gamma / 2)^(-1/4) exp(-z^2 / (gamma l^2))``.

    The crystal length is used as the effective length ``l``, and the profile
    is truncated at ``truncation * sqrt(gamma) * l`` on either side.
    """

    gamma: float = GAUSSIAN_PROFILE_GAMMA
    truncation: float = 4.0

    kind = "gaussian"

    def window(self, length):
        half = self.truncation * np.sqrt(self.gamma) * length
        return -half, half

    def mismatch_offset(self):
        return 0.0

    def profile(self, z, length):
        z = np.asarray(z, dtype=float)
        norm = (np.pi * self.gamma / 2.0) ** -0.25
        return norm * np.exp(-(z**2) / (self.gamma * length**2))

    def segments(self, length, n_sections):
        z0, z1 = self.window(length)
        dz = (z1 - z0) / n_sections
        starts = z0 + dz * np.arange(n_sections)
        return starts, np.full(n_sections, dz), self.profile(starts + 0.5 * dz, length)


Poling = EffectiveTopHat | ExplicitPoling | GaussianProfile


@dataclass(frozen=True)
class CrystalSpec:
    """Crystal geometry and coupling constants.

    Args:
        length: crystal length L in m (the effective length for a Gaussian profile)
        dbeta_signal: 1/v_s - 1/v_p in s/m
        dbeta_idler: 1/v_i - 1/v_p in s/m
        gamma_pdc: pair-generation coupling in W^-1/2 m^-1
        gamma_xpm_signal: cross-phase modulation on the signal in W^-1 m^-1
        gamma_xpm_idler: cross-phase modulation on the idler in W^-1 m^-1
        gamma_spm: pump self-phase modulation in W^-1 m^-1
        n_sections: number of propagation sections
        poling: nonlinearity profile
    """

    length: float
    dbeta_signal: float
    dbeta_idler: float
    gamma_pdc: float
    gamma_xpm_signal: float = 0.0
    gamma_xpm_idler: float = 0.0
    gamma_spm: float = 0.0
    n_sections: int = 50
    poling: Poling = field(default_factory=EffectiveTopHat)

    def __post_init__(self):
        if not np.isfinite(self.length) or self.length < 0:
            raise DomainError(f"crystal length must be >= 0, got {self.length}")
        if isinstance(self.n_sections, bool) or int(self.n_sections) != self.n_sections \
                or self.n_sections < 1:
            raise DomainError(f"n_sections must be a positive integer, got {self.n_sections}")
        if not self.gamma_pdc >= 0:
            raise DomainError(f"gamma_pdc must be >= 0, got {self.gamma_pdc}")
        for name in ("dbeta_signal", "dbeta_idler", "gamma_xpm_signal",
                     "gamma_xpm_idler", "gamma_spm"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        object.__setattr__(self, "n_sections", int(self.n_sections))

    def replace(self, **changes) -> "CrystalSpec":
        return replace(self, **changes)

    def chi2_only(self) -> "CrystalSpec":
        return replace(self, gamma_xpm_signal=0.0, gamma_xpm_idler=0.0, gamma_spm=0.0)

    @property
    def delta_inverse_velocity(self) -> float:
        """``1/v_s - 1/v_i`` in s/m."""
        return self.dbeta_signal - self.dbeta_idler

    def window(self):
        return self.poling.window(self.length)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["poling"] = {"kind": self.poling.kind, **asdict(self.poling)}
        return d

    def spec_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class TransferMatrices:
    """Discrete transfer blocks ``M^xy_jk = U^xy(w_j, w_k) dw``.

    ``a_s_out = ss @ a_s + si @ a_i^dagger`` and
    ``a_i_out = ii @ a_i + is_ @ a_s^dagger``.
    """

    ss: np.ndarray
    si: np.ndarray
    ii: np.ndarray
    is_: np.ndarray
    grid: FrequencyGrid
    metadata: dict = field(default_factory=dict)

    def blocks(self) -> dict:
        return {"ss": self.ss, "si": self.si, "ii": self.ii, "is": self.is_}

    def functions(self) -> dict:
        """Continuum transfer functions ``U = M / dw`` (units s)."""
        return {k: v / self.grid.spacing for k, v in self.blocks().items()}

    def swapped(self) -> "TransferMatrices":
        """Relabel signal and idler."""
        return TransferMatrices(self.ii, self.is_, self.ss, self.si, self.grid, dict(self.metadata))

    def bogoliubov_residuals(self) -> dict:
        return bogoliubov_residuals(self)


def bogoliubov_residuals(tm) -> dict:
    """Max-norm violations of the two Bogoliubov identities.

    Returns:
        dict: ``identity_a_signal``, ``identity_a_idler``, ``identity_b``
    """
    eye = np.eye(tm.ss.shape[0])
    a_s = tm.ss @ tm.ss.conj().T - tm.si @ tm.si.conj().T - eye
    a_i = tm.ii @ tm.ii.conj().T - tm.is_ @ tm.is_.conj().T - eye
    b = tm.ss @ tm.is_.T - tm.si @ tm.ii.T
    return {
        "identity_a_signal": float(np.max(np.abs(a_s))),
        "identity_a_idler": float(np.max(np.abs(a_i))),
        "identity_b": float(np.max(np.abs(b))),
    }


def _linear_mismatch(crystal, grid):
    w = grid.detunings
    return (crystal.dbeta_signal * w + crystal.poling.mismatch_offset(),
            crystal.dbeta_idler * w)


def build_section_generator(crystal, pump_at_midpoint, autocorr, grid=None, poling_sign=1.0):
    """Generator of one crystal section for the stacked vector ``[a_s; a_i^dagger]``.

    Args:
        crystal (CrystalSpec): coupling constants
        pump_at_midpoint (PumpSpectrum): pump evaluated at the section midpoint
        autocorr (PumpAutocorrelation): input-face pump autocorrelation
        grid (FrequencyGrid): field grid; defaults to the pump grid
        poling_sign (float): value of the nonlinearity profile g in this section

    Returns:
        ndarray: complex (2n, 2n) generator
    """
    grid = pump_at_midpoint.grid if grid is None else grid
    if pump_at_midpoint.grid.pump_size < 2 * grid.n_points or \
            not np.isclose(pump_at_midpoint.grid.spacing, grid.spacing, rtol=1e-12, atol=0):
        raise CoverageError("pump lattice does not cover the field sum frequencies")
    n = grid.n_points
    dw = grid.spacing
    d_s, d_i = _linear_mismatch(crystal, grid)
    idx = pump_at_midpoint.grid.pump_index(
        np.arange(n)[:, None] + np.arange(n)[None, :] - n)
    beta = pump_at_midpoint.amplitudes[idx]
    coupling = crystal.gamma_pdc * poling_sign / np.sqrt(2.0 * np.pi) * dw * beta
    j = np.arange(n)
    kernel = autocorr.at(j[:, None] - j[None, :]) * dw / (2.0 * np.pi)
    top_left = 1j * (np.diag(d_s) + crystal.gamma_xpm_signal * kernel)
    bottom_right = -1j * np.conj(np.diag(d_i) + crystal.gamma_xpm_idler * kernel)
    return np.block([[top_left, 1j * coupling], [-1j * np.conj(coupling), bottom_right]])


def _checked_expm(gen, section):
    out = expm(gen)
    if not np.all(np.isfinite(out)):
        raise NumericError(f"matrix exponential is not finite in section {section}", section)
    return out


def _section_exponent(crystal, pump_in, eps, grid, z_start, dz, sign, scheme):
    """Exponent of one section whose generator varies along z.

    The variation comes from SPM acting on the pump and, for smooth profiles,
    from g(z). ``midpoint`` freezes the generator at the section centre
    (second order). ``magnus4`` samples it at the two Gauss points and adds the
    commutator term (fourth order). Both exponents stay in the generator
    algebra, so the section maps are exactly Bogoliubov.

    Args:
        z_start: section start in the crystal's centred coordinate
        sign: profile value used when the profile is piecewise constant
    """
    z0 = crystal.window()[0]
    smooth = isinstance(crystal.poling, GaussianProfile)

    def generator(z):
        pump = propagate_to(pump_in, eps, crystal.gamma_spm, z - z0)
        g = float(crystal.poling.profile(z, crystal.length)) if smooth else sign
        return build_section_generator(crystal, pump, eps, grid, poling_sign=g)

    if scheme == "midpoint":
        return generator(z_start + 0.5 * dz) * dz
    h = np.sqrt(3.0) / 6.0
    a1, a2 = generator(z_start + (0.5 - h) * dz), generator(z_start + (0.5 + h) * dz)
    return 0.5 * dz * (a1 + a2) + np.sqrt(3.0) / 12.0 * dz**2 * (a2 @ a1 - a1 @ a2)


def propagate(crystal, pump_in, grid=None, *, model="full", scheme="magnus4"):
    """Transfer matrices of the crystal for a given input pump.

    The pump is evolved under SPM inside each section, the section exponents
    are exponentiated and composed from input to output, and the
    free-propagation phases at the faces are removed so that the blocks use
    input/output operators referred to the crystal faces.

    Args:
        crystal (CrystalSpec): crystal description
        pump_in (PumpSpectrum): pump at the input face
        grid (FrequencyGrid): optional, must match the pump grid
        model (str): label stored in the metadata
        scheme (str): ``"magnus4"`` (default) or ``"midpoint"``; only matters
            when SPM or a smooth profile makes the generator vary inside a section

    Returns:
        TransferMatrices: the four blocks and run metadata
    """
    if grid is not None and grid != pump_in.grid:
        raise DomainError("grid does not match the pump grid")
    if scheme not in ("magnus4", "midpoint"):
        raise DomainError(f"unknown scheme {scheme!r}")
    grid = pump_in.grid
    n = grid.n_points
    eps = autocorrelation(pump_in)
    z0, z1 = crystal.window()
    total = np.eye(2 * n, dtype=complex)

    if crystal.length > 0:
        starts, dzs, signs = crystal.poling.segments(crystal.length, crystal.n_sections)
        spm_on = crystal.gamma_spm != 0 and pump_in.pulse_energy > 0
        varying = spm_on or isinstance(crystal.poling, GaussianProfile)
        uniform = not varying and np.all(signs == signs[0])
        if uniform:
            gen = build_section_generator(crystal, pump_in, eps, grid, poling_sign=signs[0])
            total = _checked_expm(gen * float(np.sum(dzs)), 0)
        else:
            cache = {}
            for m, (za, dz, g) in enumerate(zip(starts, dzs, signs)):
                if varying:
                    step = _checked_expm(
                        _section_exponent(crystal, pump_in, eps, grid, za, dz, g, scheme), m)
                else:
                    key = (float(g), float(dz))
                    step = cache.get(key)
                    if step is None:
                        gen = build_section_generator(crystal, pump_in, eps, grid, poling_sign=g)
                        step = cache[key] = _checked_expm(gen * dz, m)
                total = step @ total
        if not np.all(np.isfinite(total)):
            raise NumericError("section product is not finite")

    k11, k12 = total[:n, :n], total[:n, n:]
    k21, k22 = total[n:, :n], total[n:, n:]
    dk_s, dk_i = _linear_mismatch(crystal, grid)
    out_s, in_s = np.exp(-1j * dk_s * z1), np.exp(1j * dk_s * z0)
    out_i, in_i = np.exp(-1j * dk_i * z1), np.exp(1j * dk_i * z0)
    ss = out_s[:, None] * k11 * in_s[None, :]
    si = out_s[:, None] * k12 * np.conj(in_i)[None, :]
    ii = out_i[:, None] * np.conj(k22) * in_i[None, :]
    is_ = out_i[:, None] * np.conj(k21) * np.conj(in_s)[None, :]
    meta = {
        "model": model,
        "pulse_energy_J": pump_in.pulse_energy,
        "crystal_hash": crystal.spec_hash(),
        "frame": "in_out",
        "scheme": scheme,
        "gamma_pdc": crystal.gamma_pdc,
        "gamma_xpm_signal": crystal.gamma_xpm_signal,
        "gamma_xpm_idler": crystal.gamma_xpm_idler,
        "gamma_spm": crystal.gamma_spm,
    }
    return TransferMatrices(ss, si, ii, is_, grid, meta)


def propagate_to(pump_in, eps, gamma_spm, distance):
    """Pump after ``distance`` of SPM from the input face (no intermediate steps)."""
    if gamma_spm == 0 or distance == 0:
        return pump_in.replace(z_position=pump_in.z_position + distance)
    amp = eps.evolve(pump_in.amplitudes, gamma_spm, distance)
    return pump_in.replace(amplitudes=amp, z_position=pump_in.z_position + distance)


def propagate_chi2_only(crystal, pump_in, grid=None):
    """As :func:`propagate` with SPM and both XPM couplings switched off."""
    return propagate(crystal.chi2_only(), pump_in, grid, model="chi2")
