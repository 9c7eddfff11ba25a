"""Emulation of seeded (stimulated-emission) transfer-function measurements.

A monochromatic seed in one grid bin is amplified by the transfer blocks. The
output power spectra of both modes are recorded for every seed bin, the
spontaneous background and the residual seed line are removed, and the
stacked spectra form maps proportional to ``|U^xy(w_out, w_seed)|^2``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DomainError, NoGainError, NormalizationError, PostProcessingError
from .grid import SPEED_OF_LIGHT, FrequencyGrid

__all__ = [
    "BLOCKS",
    "SeedScanConfig",
    "SeedScanResult",
    "seeded_psd",
    "run_seed_scan",
    "seed_line_mask",
    "kappa",
    "smoothed_amplitude",
    "error_metric",
    "diagonal_cut",
    "tail_ratio",
    "write_scan_spectra",
    "load_measured_scan",
]

BLOCKS = ("ss", "si", "ii", "is")
_MODE_OF = {"s": "signal", "i": "idler"}
MASK_SUPPORT_LIMIT = 0.3
SUPPORT_THRESHOLD = 1e-3


@dataclass(frozen=True)
class SeedScanConfig:
    """Seed and detection settings.

    Args:
        seeded_mode: ``"signal"`` or ``"idler"``, used by :func:`seeded_psd`
        seed_amplitude: coherent amplitude of the seed bin (sqrt of photon number)
        seed_bins: grid bins to seed; ``None`` seeds every bin
        eta_in_s, eta_in_i: seed coupling efficiencies
        eta_out_s, eta_out_i: detection efficiencies
        osa_resolution: half-width of the seed-line mask in wavelength (m)
        smoothing_std: Gaussian smoothing width in wavelength (m)
        noise_sigma: log-normal multiplicative noise width (0 disables noise)
        rng_seed: seed of the noise generator
    """

    seeded_mode: str = "idler"
    seed_amplitude: complex = 1.0e3
    seed_bins: tuple | None = None
    eta_in_s: float = 1.0
    eta_in_i: float = 1.0
    eta_out_s: float = 1.0
    eta_out_i: float = 1.0
    osa_resolution: float = 0.2e-9
    smoothing_std: float = 0.35e-9
    noise_sigma: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.seeded_mode not in ("signal", "idler"):
            raise DomainError(f"seeded_mode must be 'signal' or 'idler', got {self.seeded_mode!r}")
        for name in ("eta_in_s", "eta_in_i", "eta_out_s", "eta_out_i"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {val}")
        if self.osa_resolution < 0 or self.smoothing_std < 0 or self.noise_sigma < 0:
            raise DomainError("resolution, smoothing and noise widths must be non-negative")
        if self.seed_bins is not None:
            object.__setattr__(self, "seed_bins", tuple(int(b) for b in self.seed_bins))

    def replace(self, **changes) -> "SeedScanConfig":
        kw = asdict(self)
        kw.update(changes)
        return SeedScanConfig(**kw)

    def eta(self, direction, mode):
        return getattr(self, f"eta_{direction}_{mode[0]}")


@dataclass(frozen=True, eq=False)
class SeedScanResult:
    """Stacked seeded spectra.

    ``psd[key][:, c]`` is the background-subtracted output spectrum for seed
    column ``c`` (bin ``seed_bins[c]``); ``maps[key]`` additionally has the
    seed line removed in the same-mode maps. Keys follow ``BLOCKS``: first
    letter output mode, second letter seeded mode.
    """

    grid: FrequencyGrid
    seed_bins: np.ndarray
    psd: dict
    maps: dict
    config: SeedScanConfig = field(default_factory=SeedScanConfig)
    metadata: dict = field(default_factory=dict)

    def amplitude(self, key) -> np.ndarray:
        """Broadband amplitude ``sqrt(max(map, 0))``."""
        return np.sqrt(np.clip(self.maps[key], 0.0, None))


def _check_bin(grid, k):
    if not 0 <= int(k) < grid.n_points:
        raise DomainError(f"seed bin {k} is outside the grid")
    return int(k)


def seeded_psd(tm, cfg, seed_bin, seeded_mode=None):
    """Output spectra of both modes for one seeded bin.

    Args:
        tm (TransferMatrices): transfer blocks
        cfg (SeedScanConfig): seed and efficiency settings
        seed_bin (int): index of the seeded bin
        seeded_mode (str): overrides ``cfg.seeded_mode``

    Returns:
        dict: ``signal`` and ``idler`` photon spectra per bin, each the sum of
        the coherent (seeded) and spontaneous contributions
    """
    mode = seeded_mode or cfg.seeded_mode
    k0 = _check_bin(tm.grid, seed_bin)
    alpha = np.zeros(tm.grid.n_points, dtype=complex)
    alpha[k0] = cfg.seed_amplitude
    blocks = tm.blocks()
    if mode == "idler":
        a_in = np.sqrt(cfg.eta_in_i) * alpha
        coherent = {"signal": blocks["si"] @ np.conj(a_in), "idler": blocks["ii"] @ a_in}
    elif mode == "signal":
        a_in = np.sqrt(cfg.eta_in_s) * alpha
        coherent = {"signal": blocks["ss"] @ a_in, "idler": blocks["is"] @ np.conj(a_in)}
    else:
        raise DomainError(f"seeded mode must be 'signal' or 'idler', got {mode!r}")
    spont = _spontaneous(tm)
    return {m: cfg.eta("out", m) * (np.abs(coherent[m]) ** 2 + spont[m]) for m in coherent}


def _spontaneous(tm):
    return {"signal": np.sum(np.abs(tm.si) ** 2, axis=1),
            "idler": np.sum(np.abs(tm.is_) ** 2, axis=1)}


def seed_line_mask(grid, seed_bin, mode, osa_resolution):
    """Boolean mask of bins within ``osa_resolution`` (wavelength) of the seed."""
    lam = grid.signal_wavelengths if mode == "signal" else grid.idler_wavelengths
    mask = np.abs(lam - lam[seed_bin]) <= osa_resolution
    mask[seed_bin] = True
    return mask


def _interpolate_masked(column, mask):
    keep = ~mask
    if not np.any(keep):
        raise PostProcessingError("seed-line mask covers the whole spectrum")
    idx = np.arange(column.size)
    out = column.copy()
    out[mask] = np.interp(idx[mask], idx[keep], column[keep])
    return out


def _support(column, mask):
    outside = np.where(mask, 0.0, np.abs(column))
    peak = outside.max()
    if peak == 0:
        return 0
    return int(np.count_nonzero(np.abs(column) >= SUPPORT_THRESHOLD * peak))


def remove_seed_line(column, grid, seed_bin, mode, osa_resolution, support_bins=None):
    """Mask the seed line and interpolate linearly across it.

    Args:
        column (ndarray): background-subtracted spectrum of one seed column
        grid (FrequencyGrid): grid of the spectrum
        seed_bin (int): seeded bin
        mode (str): output mode, selects the wavelength axis
        osa_resolution (float): mask half-width in wavelength (m)
        support_bins (int): broadband support of the map in bins; measured on
            this column when omitted

    Raises:
        PostProcessingError: the mask covers more than 30% of the pedestal support
    """
    mask = seed_line_mask(grid, seed_bin, mode, osa_resolution)
    support = _support(column, mask) if support_bins is None else support_bins
    if support and np.count_nonzero(mask) > MASK_SUPPORT_LIMIT * support:
        raise PostProcessingError(
            f"seed-line mask of {np.count_nonzero(mask)} bins exceeds 30% of the "
            f"{support}-bin pedestal support")
    return _interpolate_masked(column, mask)


def run_seed_scan(tm, cfg):
    """Seed every requested bin in each mode and stack the output spectra.

    Args:
        tm (TransferMatrices): transfer blocks
        cfg (SeedScanConfig): scan settings

    Returns:
        SeedScanResult: raw and seed-line-corrected maps for all four blocks
    """
    grid = tm.grid
    bins = np.arange(grid.n_points) if cfg.seed_bins is None else \
        np.array([_check_bin(grid, b) for b in cfg.seed_bins])
    rng = np.random.default_rng(cfg.rng_seed)
    spont = _spontaneous(tm)
    psd = {k: np.zeros((grid.n_points, bins.size)) for k in BLOCKS}
    maps = {k: np.zeros((grid.n_points, bins.size)) for k in BLOCKS}

    for seeded in ("signal", "idler"):
        s = seeded[0]
        for c, k0 in enumerate(bins):
            out = seeded_psd(tm, cfg, k0, seeded_mode=seeded)
            for out_mode, spectrum in out.items():
                o = out_mode[0]
                key = o + s
                if cfg.noise_sigma > 0:
                    spectrum = spectrum * np.exp(cfg.noise_sigma * rng.standard_normal(spectrum.size))
                col = spectrum - cfg.eta("out", out_mode) * spont[out_mode]
                if o == s:
                    seed_line = cfg.eta("in", seeded) * cfg.eta("out", out_mode) \
                        * abs(cfg.seed_amplitude) ** 2
                    col[k0] -= seed_line
                psd[key][:, c] = col
                maps[key][:, c] = col
    # the broadband support is a property of the whole map: take its widest column
    for key in ("ss", "ii"):
        mode = _MODE_OF[key[0]]
        masks = [seed_line_mask(grid, k0, mode, cfg.osa_resolution) for k0 in bins]
        support = max(_support(psd[key][:, c], m) for c, m in enumerate(masks))
        for c, k0 in enumerate(bins):
            maps[key][:, c] = remove_seed_line(psd[key][:, c], grid, k0, mode,
                                               cfg.osa_resolution, support)
    meta = {"pulse_energy_J": tm.metadata.get("pulse_energy_J"),
            "model": tm.metadata.get("model")}
    return SeedScanResult(grid, bins, psd, maps, cfg, meta)


def _bin_width_wavelength(grid, mode):
    center = grid.center_signal if mode == "signal" else grid.center_idler
    return 2.0 * np.pi * SPEED_OF_LIGHT * grid.spacing / center**2


def smoothed_amplitude(result, key, smoothing_std=None):
    """Amplitude map smoothed by a Gaussian of width ``smoothing_std`` in wavelength.

    The width is converted to bins on each axis using the wavelength step of
    that axis' mode at its carrier.
    """
    std = result.config.smoothing_std if smoothing_std is None else smoothing_std
    amp = result.amplitude(key)
    if std == 0:
        return amp
    out_mode, seed_mode = _MODE_OF[key[0]], _MODE_OF[key[1]]
    sig_out = std / _bin_width_wavelength(result.grid, out_mode)
    sig_seed = std / _bin_width_wavelength(result.grid, seed_mode)
    if amp.shape[1] < result.grid.n_points:
        # Sparse seed columns are not contiguous in frequency; smooth along output only.
        sig_seed = 0.0
    return gaussian_filter(amp, (sig_out, sig_seed), mode="constant")


def kappa(result, smoothing_std=None):
    """Efficiency-independent gain proxy.

    ``kappa = max|U_b^ss| / max|U^si| * max|U_b^ii| / max|U^is|`` using the
    smoothed amplitude maps.

    Raises:
        NoGainError: a cross-mode map is identically zero
    """
    peak = {k: float(np.max(smoothed_amplitude(result, k, smoothing_std))) for k in BLOCKS}
    if peak["si"] == 0 or peak["is"] == 0:
        raise NoGainError("cross-mode maps vanish; kappa is undefined without gain")
    return (peak["ss"] / peak["si"]) * (peak["ii"] / peak["is"])


def kappa_factors(result, smoothing_std=None):
    """The two per-mode ratios entering :func:`kappa`."""
    peak = {k: float(np.max(smoothed_amplitude(result, k, smoothing_std))) for k in BLOCKS}
    if peak["si"] == 0 or peak["is"] == 0:
        raise NoGainError("cross-mode maps vanish; kappa is undefined without gain")
    return peak["ss"] / peak["si"], peak["ii"] / peak["is"]


def _amplitude_dict(data):
    if isinstance(data, SeedScanResult):
        return {k: data.amplitude(k) for k in BLOCKS}, data.seed_bins
    amps = {k: np.sqrt(np.clip(np.asarray(data[k], dtype=float), 0.0, None)) for k in BLOCKS}
    return amps, np.asarray(data.get("seed_bins", np.arange(amps["ss"].shape[1])))


def error_metric(measured, simulated):
    """Integrated squared difference of unit-norm amplitude maps.

    Each map is normalised by its own L2 norm with the grid measure ``dw^2``.

    Args:
        measured (SeedScanResult or dict): measured maps (same grid); a dict may
            carry ``seed_bins`` for a subset of seed columns
        simulated (SeedScanResult): simulated scan containing those columns

    Returns:
        dict: one value per block in [0, 2]
    """
    meas, meas_bins = _amplitude_dict(measured)
    sim, sim_bins = _amplitude_dict(simulated)
    lookup = {int(b): i for i, b in enumerate(sim_bins)}
    try:
        cols = [lookup[int(b)] for b in meas_bins]
    except KeyError as exc:
        raise DomainError(f"simulated scan lacks seed bin {exc}") from None
    dw = simulated.grid.spacing if isinstance(simulated, SeedScanResult) else 1.0
    out = {}
    for k in BLOCKS:
        a = meas[k]
        b = sim[k][:, cols]
        if a.shape != b.shape:
            raise DomainError(f"map {k} shapes differ: {a.shape} vs {b.shape}")
        na = np.sqrt(np.sum(a**2) * dw**2)
        nb = np.sqrt(np.sum(b**2) * dw**2)
        if na == 0 or nb == 0:
            raise NormalizationError(f"map {k} has zero norm")
        out[k] = float(np.sum((a / na - b / nb) ** 2) * dw**2)
    return out


def diagonal_cut(result, key="ss"):
    """Amplitude along ``w_out = w_seed`` of a same-mode map.

    Returns:
        tuple: (seed detunings in rad/s, amplitudes)
    """
    if key not in ("ss", "ii"):
        raise DomainError("diagonal cuts are defined for same-mode maps")
    amp = result.amplitude(key)
    cols = np.arange(result.seed_bins.size)
    return result.grid.detunings[result.seed_bins], amp[result.seed_bins, cols]


def tail_ratio(detunings, values, threshold):
    """Left-tail over right-tail integral beyond ``|detuning| >= threshold``.

    Only the range covered symmetrically on both sides is integrated.
    """
    w = np.asarray(detunings, dtype=float)
    v = np.asarray(values, dtype=float)
    reach = min(-w.min(), w.max())
    if threshold >= reach:
        raise DomainError("threshold exceeds the symmetric detuning range")
    tol = 1e-9 * reach
    left = np.sum(v[(w <= -threshold + tol) & (w >= -reach - tol)])
    right = np.sum(v[(w >= threshold - tol) & (w <= reach + tol)])
    if right == 0:
        raise NormalizationError("right tail is empty")
    return float(left / right)


# -- measured-data exchange -------------------------------------------------

def write_scan_spectra(result, directory):
    """Write one CSV per seed column and block plus an index file.

    Per-column files have header ``wavelength_nm, psd`` and carry the
    background-subtracted spectra before seed-line removal. The index has
    header ``seed_wavelength_nm, filename, mode`` where ``mode`` names the
    block (output mode letter then seeded mode letter).

    Returns:
        Path: path of the index file
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grid = result.grid
    rows = []
    for key in BLOCKS:
        out_lam = grid.signal_wavelengths if key[0] == "s" else grid.idler_wavelengths
        seed_lam = grid.signal_wavelengths if key[1] == "s" else grid.idler_wavelengths
        for c, k0 in enumerate(result.seed_bins):
            name = f"{key}_{int(k0):04d}.csv"
            with open(directory / name, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["wavelength_nm", "psd"])
                for lam, p in zip(out_lam, result.psd[key][:, c]):
                    w.writerow([repr(float(lam * 1e9)), repr(float(p))])
            rows.append([repr(float(seed_lam[k0] * 1e9)), name, key])
    index = directory / "index.csv"
    with open(index, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed_wavelength_nm", "filename", "mode"])
        w.writerows(rows)
    meta = {"grid": grid.to_dict(), "config": asdict(result.config), **result.metadata}
    (directory / "scan.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))
    return index


def load_measured_scan(index_path, grid, osa_resolution=0.2e-9):
    """Load per-seed spectra and resample them onto ``grid``.

    Spectra are interpolated linearly in wavelength. Same-mode spectra get the
    seed line masked and interpolated across, as for simulated scans.

    Returns:
        dict: block maps (n x n_seeds) and ``seed_bins``; all blocks must share
        the same seed bins
    """
    index_path = Path(index_path)
    if not index_path.is_file():
        raise FileNotFoundError(f"index file not found: {index_path}")
    with open(index_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != ["seed_wavelength_nm", "filename", "mode"]:
            raise DomainError("index header must be seed_wavelength_nm, filename, mode")
        entries = [[c.strip() for c in row] for row in reader if row]
    columns = {k: {} for k in BLOCKS}
    for seed_nm, fname, key in entries:
        if key not in BLOCKS:
            raise DomainError(f"unknown block {key!r} in index")
        seed_mode = _MODE_OF[key[1]]
        out_mode = _MODE_OF[key[0]]
        seed_freq = 2.0 * np.pi * SPEED_OF_LIGHT / (float(seed_nm) * 1e-9)
        center = grid.center_signal if seed_mode == "signal" else grid.center_idler
        k0 = int(np.rint((seed_freq - center) / grid.spacing)) + grid.n_points // 2
        _check_bin(grid, k0)
        path = index_path.parent / fname
        if not path.is_file():
            raise FileNotFoundError(f"data file not found: {path}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        lam_nm, p = data[:, 0], data[:, 1]
        order = np.argsort(lam_nm)
        target = (grid.signal_wavelengths if out_mode == "signal" else grid.idler_wavelengths) * 1e9
        columns[key][k0] = np.interp(target, lam_nm[order], p[order], left=0.0, right=0.0)
    bins = sorted(columns["ss"])
    for k in BLOCKS:
        if sorted(columns[k]) != bins:
            raise DomainError("all blocks must be measured at the same seed bins")
    for key in ("ss", "ii"):
        mode = _MODE_OF[key[0]]
        masks = {b: seed_line_mask(grid, b, mode, osa_resolution) for b in bins}
        support = max((_support(columns[key][b], masks[b]) for b in bins), default=0)
        for b in bins:
            columns[key][b] = remove_seed_line(columns[key][b], grid, b, mode, osa_resolution,
                                               support)
    out = {k: np.column_stack([columns[k][b] for b in bins]) if bins else
           np.zeros((grid.n_points, 0)) for k in BLOCKS}
    out["seed_bins"] = np.array(bins, dtype=int)
    return out
