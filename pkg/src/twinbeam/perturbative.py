"""Closed-form low-gain expansion used as an independent oracle.

First-order cross-mode transfer function (joint spectral amplitude) and the
second-order broadband same-mode term for Gaussian pumps and Gaussian
nonlinearity profiles, plus phase-matching functions for the supported
poling models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import dawsn

from .errors import DomainError, SingularityError
from .propagator import (GAUSSIAN_PROFILE_GAMMA, EffectiveTopHat, ExplicitPoling,
                         GaussianProfile)

__all__ = [
    "GaussianModel",
    "phase_matching_function",
    "phase_matching_quadrature",
    "first_order_jsa",
    "gaussian_first_order_jsa",
    "second_order_same_mode",
    "gauss_erfi",
    "low_gain_mean_photons",
    "low_gain_mean_photons_from_gvm",
    "phase_matching_angle",
]


def gauss_erfi(x):
    """``exp(-x^2) * (1 + i erfi(x))`` evaluated without overflow.

    Uses ``exp(-x^2) erfi(x) = 2 F(x) / sqrt(pi)`` with Dawson's integral F.
    """
    x = np.asarray(x, dtype=float)
    return np.exp(-(x**2)) + 1j * (2.0 / np.sqrt(np.pi)) * dawsn(x)


@dataclass(frozen=True)
class GaussianModel:
    """Gaussian pump and Gaussian nonlinearity profile.

    Args:
        sigma: pump amplitude width, ``beta ~ exp(-W^2 / (2 sigma^2))`` (rad/s)
        ell: effective crystal length (m)
        dbeta_signal: 1/v_s - 1/v_p (s/m)
        dbeta_idler: 1/v_i - 1/v_p (s/m)
        gamma_pdc: pair coupling (W^-1/2 m^-1)
        pulse_energy: E_p (J)
        gamma: profile-matching constant of the Gaussian profile
    """

    sigma: float
    ell: float
    dbeta_signal: float
    dbeta_idler: float
    gamma_pdc: float
    pulse_energy: float
    gamma: float = GAUSSIAN_PROFILE_GAMMA

    def __post_init__(self):
        if not (self.sigma > 0 and self.ell > 0 and self.pulse_energy > 0):
            raise DomainError("sigma, ell and pulse_energy must be positive")

    @classmethod
    def from_fwhm(cls, fwhm_bandwidth, **kwargs):
        """Build from the intensity FWHM of the pump spectrum (rad/s)."""
        return cls(sigma=fwhm_bandwidth / (2.0 * np.sqrt(np.log(2.0))), **kwargs)

    @property
    def mu_signal_sq(self):
        return 0.25 * self.ell**2 * self.gamma * self.dbeta_signal**2 + 0.5 / self.sigma**2

    @property
    def mu_idler_sq(self):
        return 0.25 * self.ell**2 * self.gamma * self.dbeta_idler**2 + 0.5 / self.sigma**2

    @property
    def mu_cross_sq(self):
        return 0.25 * self.gamma * self.dbeta_signal * self.dbeta_idler * self.ell**2 \
            + 0.5 / self.sigma**2

    @property
    def exponent_matrix(self):
        return np.array([[self.mu_signal_sq, self.mu_cross_sq],
                         [self.mu_cross_sq, self.mu_idler_sq]])

    def pump_amplitude(self, detuning):
        """``sqrt(E_p / sigma) F(W / sigma)`` with ``F(x) = pi^(-1/4) exp(-x^2 / 2)``."""
        x = np.asarray(detuning) / self.sigma
        return np.sqrt(self.pulse_energy / self.sigma) * np.pi**-0.25 * np.exp(-0.5 * x**2)


def phase_matching_angle(dbeta_signal, dbeta_idler):
    """Ridge angle ``atan(-dbeta_s / dbeta_i)`` in degrees."""
    if dbeta_idler == 0:
        return 90.0
    return float(np.degrees(np.arctan(-dbeta_signal / dbeta_idler)))


def phase_matching_function(dk, poling=None, length=None):
    """Phase-matching function ``Phi(dk) = int dz / sqrt(2 pi) g(z) exp(-i dk z)``.

    Args:
        dk (float or array): wave-vector mismatch (1/m)
        poling: ``EffectiveTopHat``, ``GaussianProfile`` or ``ExplicitPoling``;
            defaults to the top hat
        length (float): crystal length (effective length for the Gaussian) in m

    Returns:
        complex or array: Phi in m
    """
    if length is None or not length > 0:
        raise DomainError("crystal length must be positive")
    poling = EffectiveTopHat() if poling is None else poling
    dk = np.asarray(dk, dtype=float)
    if isinstance(poling, EffectiveTopHat):
        out = length / np.sqrt(2.0 * np.pi) * np.sinc(dk * length / (2.0 * np.pi))
        return out.astype(complex)
    if isinstance(poling, GaussianProfile):
        g = poling.gamma
        out = (np.pi * g / 2.0) ** -0.25 * np.sqrt(g / 2.0) * length \
            * np.exp(-g * length**2 * dk**2 / 4.0)
        return out.astype(complex)
    if isinstance(poling, ExplicitPoling):
        walls = poling.walls(length)
        a, b = walls[:-1], walls[1:]
        sign = poling.profile(0.5 * (a + b), length)
        k = dk[..., None] + poling.mismatch_offset()
        small = np.abs(k) < 1e-300
        safe = np.where(small, 1.0, k)
        seg = np.where(small, b - a, (np.exp(-1j * safe * a) - np.exp(-1j * safe * b)) / (1j * safe))
        return np.sum(sign * seg, axis=-1) / np.sqrt(2.0 * np.pi)
    raise DomainError(f"unsupported poling {poling!r}")


def phase_matching_quadrature(dk, poling=None, length=None):
    """Direct adaptive quadrature of the defining integral (reference only)."""
    poling = EffectiveTopHat() if poling is None else poling
    z0, z1 = poling.window(length)
    points = None
    if isinstance(poling, ExplicitPoling):
        points = poling.walls(length)[1:-1]
    offset = poling.mismatch_offset()

    def part(fn):
        val, _ = quad(lambda z: float(poling.profile(z, length)) * fn((dk + offset) * z),
                      z0, z1, points=points, limit=max(200, 4 * (len(points) if points is not None else 0)),
                      epsabs=1e-14 * (z1 - z0), epsrel=1e-10)
        return val

    return (part(np.cos) - 1j * part(np.sin)) / np.sqrt(2.0 * np.pi)


def first_order_jsa(pump, crystal, grid=None):
    """First-order cross-mode transfer function ``U^si`` on the grid.

    ``U^si(w, w') = i gamma_pdc beta(w + w') Phi(dk_s(w) + dk_i(w'))``.

    Args:
        pump (PumpSpectrum): input pump
        crystal (CrystalSpec): crystal (its poling selects Phi)
        grid (FrequencyGrid): defaults to the pump grid

    Returns:
        ndarray: n x n complex matrix in s (continuum normalisation)
    """
    grid = pump.grid if grid is None else grid
    w = grid.detunings
    beta = pump.amplitudes[grid.sum_frequency_indices()]
    dk = crystal.dbeta_signal * w[:, None] + crystal.dbeta_idler * w[None, :]
    phi = phase_matching_function(dk, crystal.poling, crystal.length)
    return 1j * crystal.gamma_pdc * beta * phi


def gaussian_first_order_jsa(model, grid):
    """Double-Gaussian closed form ``U^si = A exp(-v M v^T)``, ``v = (W_s, W_i)``."""
    ws = grid.detunings[:, None]
    wi = grid.detunings[None, :]
    m = model.exponent_matrix
    quad_form = m[0, 0] * ws**2 + 2.0 * m[0, 1] * ws * wi + m[1, 1] * wi**2
    amp = 1j * model.gamma_pdc * model.ell * np.sqrt(
        model.pulse_energy / (np.pi * model.sigma) * np.sqrt(model.gamma / 2.0))
    return amp * np.exp(-quad_form)


def second_order_same_mode(model, grid, mode="signal", convention="printed"):
    """Broadband second-order same-mode term ``U_b^xx(w, w'')``.

    ``convention="printed"`` evaluates the closed form with
    ``x+ ~ (1/v_s - 1/v_i)(W + W'')`` exactly as usually quoted.
    ``convention="equations"`` reverses the orientation of ``x+``, which is the
    orientation produced by the coupled-mode equations integrated by
    :func:`twinbeam.propagator.propagate` (the two differ by complex
    conjugation of the result).

    Args:
        model (GaussianModel): Gaussian pump and profile
        grid (FrequencyGrid): output grid
        mode (str): ``"signal"`` or ``"idler"``
        convention (str): ``"printed"`` or ``"equations"``

    Returns:
        ndarray: n x n complex matrix in s
    """
    if mode == "signal":
        mu_self, mu_other = np.sqrt(model.mu_signal_sq), np.sqrt(model.mu_idler_sq)
        dinv = model.dbeta_signal - model.dbeta_idler
    elif mode == "idler":
        mu_self, mu_other = np.sqrt(model.mu_idler_sq), np.sqrt(model.mu_signal_sq)
        dinv = model.dbeta_idler - model.dbeta_signal
    else:
        raise DomainError(f"mode must be 'signal' or 'idler', got {mode!r}")
    if convention == "equations":
        dinv = -dinv
    elif convention != "printed":
        raise DomainError(f"unknown convention {convention!r}")
    w1 = grid.detunings[:, None]
    w2 = grid.detunings[None, :]
    g = model.gamma
    x_plus = 0.5 * np.sqrt(g) * model.ell * dinv / (2.0 * model.sigma * mu_other) * (w1 + w2)
    x_minus = mu_self / np.sqrt(2.0) * (w1 - w2)
    pref = model.gamma_pdc**2 * model.pulse_energy * model.ell**2 * np.sqrt(g) \
        / (np.sqrt(np.pi) * model.sigma * mu_other)
    return pref * np.exp(-(x_minus**2)) * gauss_erfi(x_plus)


def low_gain_mean_photons(gamma_pdc, pulse_energy, ell, v_s, v_i):
    """Low-gain photon number ``gamma^2 E_p l / |1/v_s - 1/v_i|``.

    Args:
        gamma_pdc (float): coupling in W^-1/2 m^-1
        pulse_energy (float): E_p in J
        ell (float): effective length in m
        v_s (float): signal group velocity in m/s
        v_i (float): idler group velocity in m/s

    Returns:
        float: mean photon number per mode
    """
    if v_s <= 0 or v_i <= 0:
        raise DomainError("group velocities must be positive")
    return low_gain_mean_photons_from_gvm(gamma_pdc, pulse_energy, ell, 1.0 / v_s - 1.0 / v_i)


def low_gain_mean_photons_from_gvm(gamma_pdc, pulse_energy, ell, delta_inverse_velocity):
    """As :func:`low_gain_mean_photons` with ``1/v_s - 1/v_i`` given directly (s/m)."""
    if gamma_pdc < 0 or pulse_energy < 0 or ell < 0:
        raise DomainError("gamma_pdc, pulse_energy and ell must be non-negative")
    if delta_inverse_velocity == 0:
        raise SingularityError("equal signal and idler group velocities")
    return gamma_pdc**2 * pulse_energy * ell / abs(delta_inverse_velocity)
