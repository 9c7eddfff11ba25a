"""Run configuration with unit-suffixed keys and a strict schema.

Every key carries its unit in its name. Unknown keys, wrong types and
out-of-range values raise :class:`ConfigError` before any computation.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .emulator import SeedScanConfig
from .errors import ConfigError, TwinBeamError
from .grid import angular_frequency_to_wavelength, bandwidth_wavelength_to_angular, make_grid
from .propagator import (GAUSSIAN_PROFILE_GAMMA, CrystalSpec, EffectiveTopHat, ExplicitPoling,
                         GaussianProfile)
from .pump import apply_chirp, gaussian_pump, load_pump_table, tabulated_pump

__all__ = ["RunConfig", "load_config", "default_config_path", "MODELS", "SCHEMA"]

MODELS = ("full", "chi2", "perturbative")

_num = (int, float)


def _positive(v):
    return v > 0


def _non_negative(v):
    return v >= 0


def _fraction(v):
    return 0.0 <= v <= 1.0


# section -> key -> (types, default, check, description of the check)
SCHEMA = {
    "grid": {
        "signal_wavelength_nm": (_num, 1563.0, _positive, "> 0"),
        "idler_wavelength_nm": (_num, 1569.0, _positive, "> 0"),
        "n_points": (int, 128, lambda v: 16 <= v <= 1024 and v % 2 == 0,
                     "even and in [16, 1024]"),
        "span_rad_per_ps": (_num, 163.2, _positive, "> 0"),
        "pump_padding": (int, 2, lambda v: v >= 1, ">= 1"),
    },
    "crystal": {
        "length_mm": (_num, 8.0, _non_negative, ">= 0"),
        "gvm_signal_ps_per_cm": (_num, 1.70, None, ""),
        "gvm_idler_ps_per_cm": (_num, -1.02, None, ""),
        "gamma_pdc_per_sqrtW_per_m": (_num, 28.0, _non_negative, ">= 0"),
        "gamma_xpm_signal_per_W_per_m": (_num, 0.16, None, ""),
        "gamma_xpm_idler_per_W_per_m": (_num, 0.059, None, ""),
        "gamma_spm_per_W_per_m": (_num, 0.56, None, ""),
        "n_sections": (int, 50, lambda v: v >= 1, ">= 1"),
        "poling": (str, "top_hat", lambda v: v in ("top_hat", "explicit", "gaussian"),
                   "one of top_hat, explicit, gaussian"),
        "poling_period_um": (_num, 104.0, _positive, "> 0"),
        "poling_duty": (_num, 0.5, lambda v: 0 < v < 1, "in (0, 1)"),
        "gaussian_profile_gamma": (_num, GAUSSIAN_PROFILE_GAMMA, _positive, "> 0"),
    },
    "pump": {
        "shape": (str, "gaussian", lambda v: v in ("gaussian", "tabulated"),
                  "gaussian or tabulated"),
        "fwhm_nm": (_num, 1.9, _positive, "> 0"),
        "table_path": ((str, type(None)), None, None, ""),
        "pulse_energy_pJ": (_num, 125.0, _non_negative, ">= 0"),
        "dispersion_fs_per_nm": (_num, 0.0, None, ""),
        "cubic_phase_fs3": (_num, 0.0, None, ""),
    },
    "scan": {
        "energies_pJ": (list, [125.0, 600.0], None, ""),
        "seeded_mode": (str, "idler", lambda v: v in ("signal", "idler"), "signal or idler"),
        "seed_amplitude_sqrt_photons": (_num, 1.0e3, _positive, "> 0"),
        "seed_bins": ((list, type(None)), None, None, ""),
        "eta_in_signal": (_num, 1.0, _fraction, "in [0, 1]"),
        "eta_in_idler": (_num, 1.0, _fraction, "in [0, 1]"),
        "eta_out_signal": (_num, 1.0, _fraction, "in [0, 1]"),
        "eta_out_idler": (_num, 1.0, _fraction, "in [0, 1]"),
        "osa_resolution_nm": (_num, 0.2, _non_negative, ">= 0"),
        "smoothing_std_nm": (_num, 0.35, _non_negative, ">= 0"),
        "noise_sigma": (_num, 0.0, _non_negative, ">= 0"),
    },
    "sweep": {
        "energies_pJ": (list, [5.0, 25.0, 125.0, 300.0, 600.0], None, ""),
        "models": (list, ["full", "chi2", "perturbative"], None, ""),
    },
    "chirp": {
        "pulse_energy_pJ": (_num, 490.0, _positive, "> 0"),
        "dispersions_fs_per_nm": (list, [-250.0, -178.0, -100.0, 0.0, 100.0, 178.0, 250.0],
                                  None, ""),
    },
    "calibration": {
        "max_passes": (int, 6, lambda v: v >= 1, ">= 1"),
        "tolerance_relative": (_num, 2e-3, _positive, "> 0"),
        "gamma_pdc_bracket_per_sqrtW_per_m": (list, [10.0, 100.0], None, ""),
        "gamma_xpm_bracket_per_W_per_m": (list, [-0.5, 0.5], None, ""),
        "gamma_spm_bracket_per_W_per_m": (list, [0.0, 1.5], None, ""),
        "fringe_center_wavelength_nm": (_num, 1566.0, _positive, "> 0"),
    },
    "run": {
        "model": (str, "full", lambda v: v in MODELS, "full, chi2 or perturbative"),
        "output_dir": (str, "out", None, ""),
        "rng_seed": (int, 0, _non_negative, ">= 0"),
    },
}


def _check_value(section, key, value):
    types, _, check, desc = SCHEMA[section][key]
    if isinstance(value, bool) or not isinstance(value, types):
        raise ConfigError(f"{section}.{key}: expected {types}, got {type(value).__name__}")
    if isinstance(value, list):
        for item in value:
            if isinstance(item, bool) or not isinstance(item, (int, float, str)):
                raise ConfigError(f"{section}.{key}: list items must be numbers or strings")
    if check is not None and not check(value):
        raise ConfigError(f"{section}.{key} = {value!r} must be {desc}")


def _numbers(section, key, values, positive=False, ascending=False, length=None):
    if not values or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                             for v in values):
        raise ConfigError(f"{section}.{key} must be a non-empty list of numbers")
    if positive and any(v <= 0 for v in values):
        raise ConfigError(f"{section}.{key} values must be positive")
    if ascending and any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"{section}.{key} must be strictly ascending")
    if length is not None and len(values) != length:
        raise ConfigError(f"{section}.{key} must have {length} entries")
    if length == 2 and not values[1] > values[0]:
        raise ConfigError(f"{section}.{key} must satisfy lower < upper")
    return [float(v) for v in values]


@dataclass
class RunConfig:
    """Validated configuration.

    Attributes:
        values: section -> key -> value, all keys present
        base_dir: directory used to resolve relative paths
    """

    values: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, raw, base_dir=None) -> "RunConfig":
        """Validate a nested mapping and fill defaults.

        Raises:
            ConfigError: unknown section or key, wrong type or invalid value
        """
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError("configuration root must be a mapping")
        values = {}
        for section in raw:
            if section not in SCHEMA:
                raise ConfigError(f"unknown section {section!r}")
        for section, keys in SCHEMA.items():
            given = raw.get(section)
            given = {} if given is None else given
            if not isinstance(given, dict):
                raise ConfigError(f"section {section!r} must be a mapping")
            for key in given:
                if key not in keys:
                    raise ConfigError(f"unknown key {section}.{key}")
            values[section] = {}
            for key, (_, default, _, _) in keys.items():
                value = given.get(key, copy.deepcopy(default))
                if isinstance(value, int) and not isinstance(value, bool) \
                        and keys[key][0] is _num:
                    value = float(value)
                _check_value(section, key, value)
                values[section][key] = value
        cfg = cls(values, Path(base_dir) if base_dir is not None else Path.cwd())
        cfg._validate_lists()
        return cfg

    def _validate_lists(self):
        v = self.values
        _numbers("scan", "energies_pJ", v["scan"]["energies_pJ"], positive=True, ascending=True)
        _numbers("sweep", "energies_pJ", v["sweep"]["energies_pJ"], positive=True,
                 ascending=True)
        _numbers("chirp", "dispersions_fs_per_nm", v["chirp"]["dispersions_fs_per_nm"])
        for key in ("gamma_pdc_bracket_per_sqrtW_per_m", "gamma_xpm_bracket_per_W_per_m",
                    "gamma_spm_bracket_per_W_per_m"):
            _numbers("calibration", key, v["calibration"][key], length=2)
        models = v["sweep"]["models"]
        if not models or any(m not in MODELS for m in models):
            raise ConfigError(f"sweep.models must be a non-empty subset of {MODELS}")
        bins = v["scan"]["seed_bins"]
        if bins is not None:
            n = v["grid"]["n_points"]
            if not bins or any(not isinstance(b, int) or not 0 <= b < n for b in bins):
                raise ConfigError(f"scan.seed_bins must be grid indices in [0, {n})")
        if v["pump"]["shape"] == "tabulated" and not v["pump"]["table_path"]:
            raise ConfigError("pump.table_path is required for a tabulated pump")

    def to_dict(self) -> dict:
        return copy.deepcopy(self.values)

    def config_hash(self) -> str:
        text = json.dumps(self.values, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_overrides(self, **sections) -> "RunConfig":
        """New config with ``section={key: value}`` overrides applied."""
        raw = self.to_dict()
        for section, changes in sections.items():
            raw.setdefault(section, {}).update(changes)
        return RunConfig.from_dict(raw, self.base_dir)

    # -- builders -------------------------------------------------------------

    def grid(self):
        g = self.values["grid"]
        try:
            return make_grid(g["signal_wavelength_nm"] * 1e-9, g["idler_wavelength_nm"] * 1e-9,
                             g["span_rad_per_ps"] * 1e12, g["n_points"], g["pump_padding"])
        except TwinBeamError as exc:
            raise ConfigError(f"grid: {exc}") from exc

    def crystal(self):
        c = self.values["crystal"]
        if c["poling"] == "explicit":
            poling = ExplicitPoling(c["poling_period_um"] * 1e-6, c["poling_duty"])
        elif c["poling"] == "gaussian":
            poling = GaussianProfile(c["gaussian_profile_gamma"])
        else:
            poling = EffectiveTopHat()
        try:
            return CrystalSpec(
                length=c["length_mm"] * 1e-3,
                dbeta_signal=c["gvm_signal_ps_per_cm"] * 1e-10,
                dbeta_idler=c["gvm_idler_ps_per_cm"] * 1e-10,
                gamma_pdc=c["gamma_pdc_per_sqrtW_per_m"],
                gamma_xpm_signal=c["gamma_xpm_signal_per_W_per_m"],
                gamma_xpm_idler=c["gamma_xpm_idler_per_W_per_m"],
                gamma_spm=c["gamma_spm_per_W_per_m"],
                n_sections=c["n_sections"],
                poling=poling,
            )
        except TwinBeamError as exc:
            raise ConfigError(f"crystal: {exc}") from exc

    def pump(self, grid=None, pulse_energy=None, dispersion_fs_per_nm=None):
        """Pump spectrum at the configured (or given) energy in J, with chirp applied."""
        p = self.values["pump"]
        grid = self.grid() if grid is None else grid
        energy = p["pulse_energy_pJ"] * 1e-12 if pulse_energy is None else pulse_energy
        disp = p["dispersion_fs_per_nm"] if dispersion_fs_per_nm is None else dispersion_fs_per_nm
        try:
            if p["shape"] == "tabulated":
                path = Path(p["table_path"])
                if not path.is_absolute():
                    path = self.base_dir / path
                pump = tabulated_pump(grid, load_pump_table(path), energy)
            else:
                lam = angular_frequency_to_wavelength(grid.center_pump)
                fwhm = bandwidth_wavelength_to_angular(p["fwhm_nm"] * 1e-9, lam)
                pump = gaussian_pump(grid, energy, fwhm)
        except TwinBeamError as exc:
            raise ConfigError(f"pump: {exc}") from exc
        # fs/nm -> s/m
        return apply_chirp(pump, disp * 1e-6, p["cubic_phase_fs3"] * 1e-45)

    def scan_config(self):
        s = self.values["scan"]
        return SeedScanConfig(
            seeded_mode=s["seeded_mode"],
            seed_amplitude=s["seed_amplitude_sqrt_photons"],
            seed_bins=None if s["seed_bins"] is None else tuple(s["seed_bins"]),
            eta_in_s=s["eta_in_signal"], eta_in_i=s["eta_in_idler"],
            eta_out_s=s["eta_out_signal"], eta_out_i=s["eta_out_idler"],
            osa_resolution=s["osa_resolution_nm"] * 1e-9,
            smoothing_std=s["smoothing_std_nm"] * 1e-9,
            noise_sigma=s["noise_sigma"],
            rng_seed=self.values["run"]["rng_seed"],
        )


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponents without a sign or dot (``1e6``) as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                  |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                  |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                  |[-+]?\.(?:inf|Inf|INF)
                  |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def default_config_path():
    """Path of the shipped example configuration (reference crystal parameters)."""
    return resources.files("twinbeam") / "data" / "reference.yaml"


def load_config(path=None) -> RunConfig:
    """Read and validate a YAML configuration.

    Args:
        path: config file; ``None`` loads the shipped example

    Raises:
        ConfigError: unreadable file, invalid YAML or schema violation
    """
    if path is None:
        path = default_config_path()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return RunConfig.from_dict(raw, path.parent)
