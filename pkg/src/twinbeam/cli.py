"""Command-line interface.

Subcommands ``simulate``, ``seedscan``, ``sweep``, ``chirp-opt`` and
``calibrate``. Exit codes: 0 success, 2 configuration error, 3 numerical
failure, 4 fit failure or missing calibration data.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import (CalibrationData, CalibrationModel, calibrate_pipeline, hash_files,
                          synthetic_fringes)
from .config import load_config
from .decomposition import SWEEP_HEADER, schmidt_decompose, sweep_gain
from .emulator import (BLOCKS, SeedScanResult, diagonal_cut, kappa, load_measured_scan,
                       run_seed_scan, write_scan_spectra)
from .errors import ConfigError, DomainError, FitError, TwinBeamError
from .grid import make_grid
from .perturbative import phase_matching_function
from .propagator import propagate

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERIC", "EXIT_FIT"]

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FIT = 0, 2, 3, 4
MANIFEST = "manifest.json"


class MissingDataError(FitError):
    """A calibration input file does not exist."""


# -- output helpers ------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_complex_matrix(path, matrix):
    """CSV with columns ``re_0, im_0, re_1, im_1, ...``; one matrix row per line."""
    m = np.asarray(matrix, dtype=complex)
    header = [f"{part}_{j}" for j in range(m.shape[1]) for part in ("re", "im")]
    rows = []
    for row in m:
        rows.append([float(v) for z in row for v in (z.real, z.imag)])
    _write_rows(path, header, rows)


def read_complex_matrix(path):
    """Inverse of :func:`write_complex_matrix`."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0::2] + 1j * data[:, 1::2]


def write_axis_map(path, row_axis, col_axis, values, corner="row\\col"):
    """Real matrix with the column axis as header row and the row axis as first column."""
    header = [corner] + [_fmt(c) for c in col_axis]
    rows = [[float(r)] + [float(v) for v in line] for r, line in zip(row_axis, values)]
    _write_rows(path, header, rows)


def read_axis_map(path):
    """Inverse of :func:`write_axis_map`; returns (row axis, column axis, values)."""
    with open(path, encoding="utf-8") as fh:
        header = next(csv.reader(fh))
    cols = np.array([float(c) for c in header[1:]])
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], cols, data[:, 1:]


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n",
                          encoding="utf-8")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    return repr(o)


def _pj(energy_pj) -> str:
    return f"{energy_pj:g}".replace(".", "p")


def _map_executor(threads, fn, items):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- context ---------------------------------------------------------------------

def _crystal_for(cfg, model):
    crystal = cfg.crystal()
    return crystal.chi2_only() if model == "chi2" else crystal


def _resolve_model(args, cfg):
    return args.model if args.model is not None else cfg.values["run"]["model"]


def _reject_perturbative(model, command):
    if model == "perturbative":
        raise ConfigError(f"model 'perturbative' is only available for the sweep command, "
                          f"not {command}")


# -- subcommands -------------------------------------------------------------------

def cmd_simulate(cfg, out, model, threads=1):
    """Transfer blocks and metadata at the configured pump energy."""
    _reject_perturbative(model, "simulate")
    grid = cfg.grid()
    crystal = _crystal_for(cfg, model)
    pump = cfg.pump(grid)
    tm = propagate(crystal, pump, model=model)
    for key, block in tm.blocks().items():
        write_complex_matrix(out / f"transfer_{key}.csv", block)
    _write_rows(out / "detunings.csv", ["bin", "signal_detuning_rad_s", "idler_detuning_rad_s"],
                [(j, float(w), float(w)) for j, w in enumerate(grid.detunings)])
    residuals = tm.bogoliubov_residuals()
    summary = {}
    try:
        sd = schmidt_decompose(tm)
        summary = {"mean_photons": sd.mean_photons, "schmidt_number": sd.schmidt_number}
    except TwinBeamError as exc:
        summary = {"decomposition_error": f"{type(exc).__name__}: {exc}"}
    meta = {
        "grid": grid.to_dict(),
        "crystal": crystal.to_dict(),
        "pump": {"pulse_energy_J": pump.pulse_energy, "chirp": pump.chirp},
        "transfer": tm.metadata,
        "bogoliubov_residuals": residuals,
        "bogoliubov_residual_max": max(residuals.values()),
        "config_hash": cfg.config_hash(),
        "version": __version__,
        **summary,
    }
    if model == "chi2":
        meta["overrides"] = {"gamma_spm": 0.0, "gamma_xpm_signal": 0.0, "gamma_xpm_idler": 0.0}
    _write_json(out / "metadata.json", meta)
    return meta


def _synthetic_aux(cfg, out):
    """Phase-matching profile and walk-off fringes for the GVM fits."""
    g = cfg.values["grid"]
    crystal = cfg.crystal()
    dmu = crystal.length * (crystal.dbeta_signal - crystal.dbeta_idler)
    # about 27 phase-matching widths across the map, 10 bins per width
    span = 150.0 / abs(dmu) if dmu != 0 else g["span_rad_per_ps"] * 1e12
    wide = make_grid(g["signal_wavelength_nm"] * 1e-9, g["idler_wavelength_nm"] * 1e-9, span, 256)
    w = wide.detunings
    if crystal.length > 0:
        pm = np.abs(phase_matching_function(
            crystal.dbeta_signal * w[:, None] + crystal.dbeta_idler * w[None, :],
            None, crystal.length))
    else:
        pm = np.zeros((w.size, w.size))
    write_axis_map(out / "pm_profile.csv", w, w, pm, corner="signal_rad_s\\idler_rad_s")
    lam0 = cfg.values["calibration"]["fringe_center_wavelength_nm"] * 1e-9
    lam = np.linspace(lam0 - 25e-9, lam0 + 25e-9, 2001)
    _write_rows(out / "fringes.csv", ["wavelength_nm", "intensity"],
                [(float(a * 1e9), float(b)) for a, b in zip(lam, synthetic_fringes(lam, dmu, lam0))])


def cmd_seedscan(cfg, out, model, threads=1):
    """Seeded-scan maps per energy, kappa table and calibration inputs."""
    _reject_perturbative(model, "seedscan")
    grid = cfg.grid()
    crystal = _crystal_for(cfg, model)
    scan_cfg = cfg.scan_config()
    energies = cfg.values["scan"]["energies_pJ"]

    def one(e_pj):
        tm = propagate(crystal, cfg.pump(grid, e_pj * 1e-12), model=model)
        return run_seed_scan(tm, scan_cfg)

    results = _map_executor(threads, one, energies)
    rows, scans = [], []
    for e_pj, res in zip(energies, results):
        sub = out / f"scan_{_pj(e_pj)}pJ"
        sub.mkdir(parents=True, exist_ok=True)
        seed_w = grid.detunings[res.seed_bins]
        for key in BLOCKS:
            write_axis_map(sub / f"map_{key}.csv", grid.detunings, seed_w, res.maps[key],
                           corner="output_rad_s\\seed_rad_s")
        _write_json(sub / "maps.json", {
            "grid": grid.to_dict(), "pulse_energy_J": e_pj * 1e-12, "model": model,
            "eta": {k: getattr(scan_cfg, k) for k in ("eta_in_s", "eta_in_i",
                                                     "eta_out_s", "eta_out_i")},
            "config_hash": cfg.config_hash()})
        index = write_scan_spectra(res, sub)
        rows.append((e_pj * 1e-12, kappa(res)))
        scans.append({"pulse_energy_J": e_pj * 1e-12,
                      "index": str(index.relative_to(out))})
    _write_rows(out / "kappa.csv", ["pulse_energy_J", "kappa"], rows)
    _synthetic_aux(cfg, out)
    _write_json(out / MANIFEST, {"scans": scans, "pm_profile": "pm_profile.csv",
                                 "fringes": "fringes.csv", "model": model,
                                 "config_hash": cfg.config_hash()})
    return rows


def cmd_sweep(cfg, out, model=None, threads=1):
    """(E_p, <n>, K) table for each model."""
    models = [model] if model is not None else list(cfg.values["sweep"]["models"])
    grid = cfg.grid()
    crystal = cfg.crystal()
    pump = cfg.pump(grid)
    energies = [e * 1e-12 for e in cfg.values["sweep"]["energies_pJ"]]
    solved = [m for m in models if m != "perturbative"]

    by_energy = _map_executor(
        threads, lambda e: sweep_gain(crystal, pump, energies=[e], models=solved) if solved
        else [], energies)
    pert = sweep_gain(crystal, pump, energies=energies, models=("perturbative",)) \
        if "perturbative" in models else []
    rows = []
    for i, e in enumerate(energies):
        per = {r.model: r for r in by_energy[i]}
        per.update({r.model: r for r in pert if r.pulse_energy == e})
        rows.extend(per[m] for m in models)
    _write_rows(out / "sweep.csv", SWEEP_HEADER, [r.as_tuple() for r in rows])
    errors = [{"pulse_energy_J": r.pulse_energy, "model": r.model, "error": r.error}
              for r in rows if r.error]
    _write_json(out / "sweep.json", {"models": models, "errors": errors,
                                     "config_hash": cfg.config_hash()})
    return rows


def cmd_chirp_opt(cfg, out, model, threads=1):
    """(D, <n>, K) table at fixed pump energy."""
    _reject_perturbative(model, "chirp-opt")
    grid = cfg.grid()
    crystal = _crystal_for(cfg, model)
    energy = cfg.values["chirp"]["pulse_energy_pJ"] * 1e-12
    ds = cfg.values["chirp"]["dispersions_fs_per_nm"]

    def one(d):
        try:
            sd = schmidt_decompose(propagate(crystal, cfg.pump(grid, energy, d), model=model))
            return (d, sd.mean_photons, sd.schmidt_number, "")
        except TwinBeamError as exc:
            log.warning("chirp row D=%g failed: %s", d, exc)
            return (d, math.nan, math.nan, f"{type(exc).__name__}: {exc}")

    rows = _map_executor(threads, one, ds)
    _write_rows(out / "chirp.csv", ["dispersion_fs_per_nm", "mean_photons", "schmidt_number"],
                [(float(d), n, k) for d, n, k, _ in rows])
    valid = [r for r in rows if not math.isnan(r[2])]
    best = min(valid, key=lambda r: r[2]) if valid else None
    _write_json(out / "chirp.json", {
        "pulse_energy_J": energy, "model": model,
        "best_dispersion_fs_per_nm": best[0] if best else None,
        "best_schmidt_number": best[2] if best else None,
        "errors": [{"dispersion_fs_per_nm": d, "error": e} for d, _, _, e in rows if e],
        "config_hash": cfg.config_hash()})
    return rows


def _require(path):
    if not Path(path).is_file():
        raise MissingDataError(f"missing data file: {path}")
    return Path(path)


def load_calibration_data(cfg, data_dir):
    """Read the files listed in a seed-scan manifest into CalibrationData."""
    data_dir = Path(data_dir)
    manifest = json.loads(_require(data_dir / MANIFEST).read_text(encoding="utf-8"))
    grid = cfg.grid()
    scan_cfg = cfg.scan_config()
    files = [data_dir / MANIFEST]
    scans = []
    for entry in sorted(manifest["scans"], key=lambda s: s["pulse_energy_J"]):
        index = _require(data_dir / entry["index"])
        with open(index, newline="", encoding="utf-8") as fh:
            names = [row[1].strip() for row in list(csv.reader(fh))[1:] if row]
        files.append(index)
        files.extend(_require(index.parent / n) for n in names)
        try:
            loaded = load_measured_scan(index, grid, scan_cfg.osa_resolution)
        except FileNotFoundError as exc:
            raise MissingDataError(str(exc)) from exc
        bins = loaded.pop("seed_bins")
        scans.append((entry["pulse_energy_J"],
                      SeedScanResult(grid, bins, loaded, loaded, scan_cfg)))
    if not scans:
        raise FitError("manifest lists no scans")

    pm_map = pm_axes = fringes = None
    if manifest.get("pm_profile"):
        path = _require(data_dir / manifest["pm_profile"])
        files.append(path)
        ws, wi, pm_map = read_axis_map(path)
        pm_axes = (ws, wi)
    if manifest.get("fringes"):
        path = _require(data_dir / manifest["fringes"])
        files.append(path)
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        lam0 = cfg.values["calibration"]["fringe_center_wavelength_nm"] * 1e-9
        fringes = (arr[:, 0] * 1e-9, arr[:, 1], lam0)

    low_e, low = scans[0]
    high_e, high = scans[-1]
    cuts = {"signal": diagonal_cut(low, "ss")[1], "idler": diagonal_cut(low, "ii")[1]}
    return CalibrationData(
        kappas=[(e, kappa(s)) for e, s in scans],
        low_gain_energy=low_e, cuts=cuts,
        high_gain_energy=high_e, high_gain_scan=high,
        pm_map=pm_map, pm_axes=pm_axes, fringes=fringes,
        source_hash=hash_files(files),
    )


def cmd_calibrate(cfg, out, model, data_dir, threads=1):
    """Fit the model parameters to a seed-scan data directory."""
    _reject_perturbative(model, "calibrate")
    data = load_calibration_data(cfg, data_dir)
    scan_cfg = cfg.scan_config()
    c = cfg.values["calibration"]
    scan_bins = data.high_gain_scan.seed_bins
    if cfg.values["scan"]["seed_bins"] is None and len(scan_bins) != cfg.grid().n_points:
        scan_cfg = scan_cfg.replace(seed_bins=tuple(int(b) for b in scan_bins))
    mdl = CalibrationModel(cfg.crystal(), cfg.pump(cfg.grid()), scan_cfg)
    reports, crystal = calibrate_pipeline(
        data, mdl, passes=c["max_passes"], tol=c["tolerance_relative"],
        gamma_bracket=tuple(c["gamma_pdc_bracket_per_sqrtW_per_m"]),
        xpm_bracket=tuple(c["gamma_xpm_bracket_per_W_per_m"]),
        spm_bracket=tuple(c["gamma_spm_bracket_per_W_per_m"]))
    result = {
        "data_hash": data.provenance(),
        "order": list(reports),
        "reports": [r.to_dict() for r in reports.values()],
        "crystal": crystal.to_dict(),
        "converged": all(r.converged for r in reports.values()),
    }
    _write_json(out / "calibration.json", result)
    if not result["converged"]:
        bad = [r.parameter for r in reports.values() if not r.converged]
        raise FitError(f"fits did not converge: {', '.join(bad)}")
    return result


# -- entry point -----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="twinbeam", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "seedscan", "sweep", "chirp-opt", "calibrate"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None,
                       help="YAML configuration (default: shipped example)")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--model", choices=("full", "chi2", "perturbative"), default=None)
        p.add_argument("--threads", type=int, default=1, help="parallel workers")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "calibrate":
            p.add_argument("--data", type=Path, required=True,
                           help="directory written by the seedscan command")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config)
        model = _resolve_model(args, cfg)
        out = args.out if args.out is not None else Path(cfg.values["run"]["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            cmd_simulate(cfg, out, model, args.threads)
        elif args.command == "seedscan":
            cmd_seedscan(cfg, out, model, args.threads)
        elif args.command == "sweep":
            cmd_sweep(cfg, out, args.model, args.threads)
        elif args.command == "chirp-opt":
            cmd_chirp_opt(cfg, out, model, args.threads)
        else:
            cmd_calibrate(cfg, out, model, args.data, args.threads)
    except (ConfigError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (TwinBeamError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
