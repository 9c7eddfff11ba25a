"""Schmidt (Bloch-Messiah) structure of twin-beam transfer matrices.

For a Bogoliubov map the four blocks share one set of squeezing parameters:

    M^ss = R_s C T_s^H      M^si = R_s S T_i^T
    M^ii = R_i C T_i^H      M^is = R_i S T_s^T

with ``C = diag(cosh r)``, ``S = diag(sinh r)``, output modes R and input
modes T (unitary, one mode per column).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, IntegrityError, TwinBeamError
from .propagator import TransferMatrices, bogoliubov_residuals, propagate

__all__ = [
    "SchmidtData",
    "schmidt_decompose",
    "mean_photons",
    "schmidt_number",
    "svd_consistency",
    "SweepRow",
    "sweep_gain",
    "SWEEP_HEADER",
]

log = logging.getLogger(__name__)

TRUNCATION = 1e-6
SWEEP_HEADER = ("pulse_energy_J", "model", "mean_photons", "schmidt_number")


@dataclass(frozen=True, eq=False)
class SchmidtData:
    """Squeezing parameters and mode functions.

    Mode matrices hold one mode per column, sampled per bin (orthonormal in
    the discrete inner product).

    Args:
        r: squeezing parameters, descending
        output_signal: rho_s modes (n x n)
        output_idler: rho_i modes (n x n)
        input_signal: tau_s modes (n x n)
        input_idler: tau_i modes (n x n)
        reconstruction_error: largest relative L2 error of the rebuilt blocks
    """

    r: np.ndarray
    output_signal: np.ndarray | None = None
    output_idler: np.ndarray | None = None
    input_signal: np.ndarray | None = None
    input_idler: np.ndarray | None = None
    reconstruction_error: float = 0.0

    @classmethod
    def from_squeezing(cls, r) -> "SchmidtData":
        r = np.sort(np.asarray(r, dtype=float))[::-1]
        if np.any(r < 0):
            raise DomainError("squeezing parameters must be non-negative")
        return cls(r=r)

    @property
    def mean_photons(self) -> float:
        return mean_photons(self)

    @property
    def schmidt_number(self) -> float:
        return schmidt_number(self)

    def significant(self, truncation=TRUNCATION) -> int:
        """Number of modes with ``sinh r_l >= truncation * sinh r_1``."""
        s = np.sinh(self.r)
        if s.size == 0 or s[0] == 0:
            return 0
        return int(np.count_nonzero(s >= truncation * s[0]))


def _as_r(sd):
    return sd.r if isinstance(sd, SchmidtData) else np.asarray(sd, dtype=float)


def mean_photons(sd) -> float:
    """``<n> = sum_l sinh^2 r_l`` for SchmidtData or a sequence of r."""
    return float(np.sum(np.sinh(_as_r(sd)) ** 2))


def schmidt_number(sd, truncation=TRUNCATION) -> float:
    """``K = (sum sinh^2 r)^2 / sum sinh^4 r``; 1 for the vacuum.

    Modes below ``truncation * sinh r_1`` are dropped.
    """
    s2 = np.sort(np.sinh(_as_r(sd)) ** 2)[::-1]
    if s2.size == 0 or s2[0] == 0:
        return 1.0
    s2 = s2[s2 >= (truncation**2) * s2[0]]
    return float(np.sum(s2) ** 2 / np.sum(s2**2))


def _fix_phase(modes):
    """Rotate each column so its largest-magnitude entry is real positive."""
    idx = np.argmax(np.abs(modes), axis=0)
    ph = modes[idx, np.arange(modes.shape[1])]
    ph = ph / np.where(np.abs(ph) == 0, 1.0, np.abs(ph))
    return np.conj(ph)


def _rel(a, b):
    nb = np.linalg.norm(b)
    diff = np.linalg.norm(a - b)
    return diff / nb if nb > 0 else diff


def schmidt_decompose(tm: TransferMatrices, tolerance=1e-6) -> SchmidtData:
    """Joint decomposition of the four transfer blocks.

    Args:
        tm (TransferMatrices): transfer blocks obeying the Bogoliubov identities
        tolerance (float): allowed identity violation and reconstruction error

    Returns:
        SchmidtData: squeezing parameters and mode bases
    """
    res = bogoliubov_residuals(tm)
    worst = max(res.values())
    if not np.isfinite(worst) or worst > tolerance:
        raise IntegrityError(f"Bogoliubov identities violated by {worst:.3e}")
    w, s, vh = np.linalg.svd(tm.si)
    r = np.arcsinh(s)
    cosh = np.cosh(r)
    v = vh.conj().T

    rot = _fix_phase(w)
    rho_s = w * rot
    tau_i = np.conj(v) * np.conj(rot)
    # M^ss = rho_s C tau_s^H
    tau_s = (np.conj(rho_s).T @ tm.ss / cosh[:, None]).conj().T
    # M^ii = rho_i C tau_i^H
    rho_i = tm.ii @ tau_i / cosh[None, :]

    rebuilt = {
        "ss": (rho_s * cosh) @ tau_s.conj().T,
        "si": (rho_s * s) @ tau_i.T,
        "ii": (rho_i * cosh) @ tau_i.conj().T,
        "is": (rho_i * s) @ tau_s.T,
    }
    err = max(_rel(rebuilt[k], v_) for k, v_ in tm.blocks().items())
    if err > tolerance:
        raise IntegrityError(f"Schmidt reconstruction error {err:.3e} exceeds {tolerance:.1e}")
    return SchmidtData(r, rho_s, rho_i, tau_s, tau_i, float(err))


def _greedy_match(overlap):
    """Pair rows with columns by repeatedly taking the largest remaining overlap."""
    ov = np.array(overlap, dtype=float)
    n = ov.shape[0]
    pairs = np.empty(n, dtype=int)
    for _ in range(n):
        i, j = np.unravel_index(np.argmax(ov), ov.shape)
        pairs[i] = j
        ov[i, :] = -1.0
        ov[:, j] = -1.0
    return pairs


def svd_consistency(tm: TransferMatrices, sd: SchmidtData) -> dict:
    """Compare an independent SVD of M^ss with ``cosh r``.

    Singular vectors of M^ss are matched to the rho_s modes by greedy overlap.

    Returns:
        dict: ``max_cosh_error`` and ``max_pairing_error`` (``cosh^2 - sinh^2 - 1``)
    """
    u, c, _ = np.linalg.svd(tm.ss)
    overlap = np.abs(sd.output_signal.conj().T @ u)
    pairs = _greedy_match(overlap)
    matched = c[pairs]
    sinh = np.sinh(sd.r)
    return {
        "max_cosh_error": float(np.max(np.abs(matched - np.cosh(sd.r)))),
        "max_pairing_error": float(np.max(np.abs(matched**2 - sinh**2 - 1.0))),
    }


@dataclass(frozen=True)
class SweepRow:
    pulse_energy: float
    model: str
    mean_photons: float
    schmidt_number: float
    error: str = ""

    def as_tuple(self):
        return (self.pulse_energy, self.model, self.mean_photons, self.schmidt_number)


def sweep_gain(crystal, pump, grid=None, energies=(), models=("full",)):
    """Mean photon number and Schmidt number against pulse energy.

    Args:
        crystal (CrystalSpec): crystal
        pump (PumpSpectrum): pump shape; rescaled to each energy
        grid (FrequencyGrid): optional, must match the pump grid
        energies (sequence): positive, ascending pulse energies (J)
        models (sequence): any of ``"full"``, ``"chi2"``, ``"perturbative"``

    Returns:
        list[SweepRow]: one row per energy and model; failed rows carry NaN
        values and the error message
    """
    energies = [float(e) for e in energies]
    if not energies:
        raise DomainError("at least one energy is required")
    if any(e <= 0 for e in energies) or any(b <= a for a, b in zip(energies, energies[1:])):
        raise DomainError("energies must be positive and strictly ascending")
    for mdl in models:
        if mdl not in ("full", "chi2", "perturbative"):
            raise DomainError(f"unknown model {mdl!r}")

    rows = []
    coeffs = None
    if "perturbative" in models:
        base = propagate(crystal.chi2_only(), pump.with_energy(energies[0]), grid, model="chi2")
        coeffs = schmidt_decompose(base).r / np.sqrt(energies[0])

    for energy in energies:
        for mdl in models:
            if mdl == "perturbative":
                r = coeffs * np.sqrt(energy)
                rows.append(SweepRow(energy, mdl, mean_photons(r), schmidt_number(r)))
                continue
            spec = crystal if mdl == "full" else crystal.chi2_only()
            try:
                tm = propagate(spec, pump.with_energy(energy), grid, model=mdl)
                sd = schmidt_decompose(tm)
                rows.append(SweepRow(energy, mdl, sd.mean_photons, sd.schmidt_number))
            except TwinBeamError as exc:
                log.warning("sweep row E=%.3e model=%s failed: %s", energy, mdl, exc)
                rows.append(SweepRow(energy, mdl, float("nan"), float("nan"),
                                     f"{type(exc).__name__}: {exc}"))
    return rows
