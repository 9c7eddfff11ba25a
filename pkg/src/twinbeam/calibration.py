"""Parameter extraction from seeded-scan and auxiliary spectral data.

All fits are one-dimensional and derivative free (bisection or golden-section
search). The fixed protocol is: group-velocity mismatch from the
phase-matching ridge and walk-off fringes, then gamma_pdc from kappa, then the
XPM couplings from low-gain diagonal cuts, then gamma_spm from the high-gain
error metric.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .emulator import diagonal_cut, error_metric, kappa, run_seed_scan
from .errors import (BracketError, DomainError, InsufficientDataError, NoFringeError,
                     SeparationError)
from .grid import SPEED_OF_LIGHT
from .propagator import propagate

__all__ = [
    "FitReport",
    "GvmResult",
    "golden_section",
    "bisect_monotone",
    "data_hash",
    "hash_files",
    "fit_gvm_from_pm_profile",
    "gvm_from_angle",
    "fringe_period_to_delta_mu",
    "synthetic_fringes",
    "fit_gamma_pdc",
    "gamma_pdc_low_gain_inversion",
    "fit_xpm",
    "fit_spm",
    "retrieve_filter_phase",
    "synthetic_interferogram",
    "CalibrationModel",
    "CalibrationData",
    "calibrate_pipeline",
]

log = logging.getLogger(__name__)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class FitReport:
    """Outcome of one parameter fit.

    Args:
        parameter: parameter name
        value: fitted value
        units: units of ``value``
        objective: final objective value
        iterations: number of search iterations
        converged: True when the search finished and the objective is below threshold
        provenance: hash of the data used
        note: free-form remark
    """

    parameter: str
    value: float
    units: str
    objective: float
    iterations: int
    converged: bool
    provenance: str = ""
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def data_hash(*arrays) -> str:
    """SHA-256 of the raw bytes of the given arrays or byte strings."""
    h = hashlib.sha256()
    for a in arrays:
        if isinstance(a, (bytes, bytearray)):
            h.update(a)
        else:
            arr = np.ascontiguousarray(np.asarray(a, dtype=float))
            h.update(str(arr.shape).encode())
            h.update(arr.tobytes())
    return h.hexdigest()


def hash_files(paths) -> str:
    """SHA-256 over the bytes of the given files, in the given order."""
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


def golden_section(fun, lo, hi, xtol=1e-4, maxiter=200):
    """Minimise a unimodal scalar function on ``[lo, hi]``.

    Returns:
        tuple: (x, f(x), iterations)
    """
    if not hi > lo:
        raise DomainError("golden-section bracket must satisfy hi > lo")
    a, b = float(lo), float(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    it = 0
    while abs(b - a) > xtol and it < maxiter:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
        it += 1
    x, fx = (c, fc) if fc < fd else (d, fd)
    return x, fx, it


def bisect_monotone(fun, lo, hi, rtol=1e-6, maxiter=200):
    """Root of an increasing function by bisection.

    Raises:
        BracketError: ``fun(lo)`` and ``fun(hi)`` have the same sign
    """
    flo, fhi = fun(lo), fun(hi)
    if flo == 0:
        return lo, 0
    if fhi == 0:
        return hi, 0
    if np.sign(flo) == np.sign(fhi):
        raise BracketError(f"interval [{lo}, {hi}] does not bracket a solution")
    it = 0
    while (hi - lo) > rtol * max(abs(lo), abs(hi)) and it < maxiter:
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if fm == 0:
            return mid, it
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
        it += 1
    return 0.5 * (lo + hi), it


# -- group-velocity mismatch ------------------------------------------------

@dataclass
class GvmResult:
    theta_pm_deg: float
    delta_mu: float
    dbeta_signal: float
    dbeta_idler: float
    reports: list = field(default_factory=list)


def gvm_from_angle(theta_pm_deg, delta_mu, length):
    """Group-velocity mismatches from the ridge angle and the walk-off delay.

    Returns:
        tuple: (dbeta_signal, dbeta_idler) in s/m
    """
    t = math.tan(math.radians(theta_pm_deg))
    return delta_mu / length * t / (t + 1.0), -delta_mu / length / (t + 1.0)


def _sinc2(x, amp, width):
    return amp * np.sinc(width * x / np.pi) ** 2


def fit_gvm_from_pm_profile(jsa_map, length, detunings_signal, detunings_idler=None,
                            threshold=0.01):
    """Ridge angle and walk-off delay from a phase-matching dominated map.

    The ridge direction is the principal axis of the intensity-weighted second
    moments of pixels above ``threshold`` of the peak. The profile across the
    ridge is fitted with ``sinc^2(W_perp dmu / (2 (cos t + sin t)))``.

    Args:
        jsa_map (ndarray): amplitude map, rows signal detuning, columns idler detuning
        length (float): crystal length in m
        detunings_signal (ndarray): row detunings in rad/s
        detunings_idler (ndarray): column detunings, defaults to the row detunings
        threshold (float): relative intensity threshold for the moment analysis

    Returns:
        GvmResult: angle in degrees, delay in s and both mismatches in s/m
    """
    amp = np.abs(np.asarray(jsa_map, dtype=complex))
    ws = np.asarray(detunings_signal, dtype=float)
    wi = ws if detunings_idler is None else np.asarray(detunings_idler, dtype=float)
    inten = amp**2
    if inten.max() == 0:
        raise InsufficientDataError("empty phase-matching map")
    S, I = np.meshgrid(ws, wi, indexing="ij")
    wgt = np.where(inten >= threshold * inten.max(), inten, 0.0)
    tot = wgt.sum()
    ms, mi = np.sum(wgt * S) / tot, np.sum(wgt * I) / tot
    cov = np.array([[np.sum(wgt * (S - ms) ** 2), np.sum(wgt * (S - ms) * (I - mi))],
                    [np.sum(wgt * (S - ms) * (I - mi)), np.sum(wgt * (I - mi) ** 2)]]) / tot
    evals, evecs = np.linalg.eigh(cov)
    v = evecs[:, 1]
    theta = math.degrees(math.atan2(v[1], v[0])) % 180.0
    th = math.radians(theta)
    par = math.cos(th) * (S - ms) + math.sin(th) * (I - mi)
    perp = math.cos(th) * (I - mi) - math.sin(th) * (S - ms)

    # profile across the ridge, averaged over the central half of its extent
    sel = wgt > 0
    par_extent = par[sel].max() - par[sel].min()
    central = np.abs(par) <= 0.25 * par_extent
    step = 0.5 * min(np.min(np.diff(ws)), np.min(np.diff(wi)))
    edges = np.arange(perp[central].min(), perp[central].max() + step, step)
    counts, _ = np.histogram(perp[central], edges)
    sums, _ = np.histogram(perp[central], edges, weights=inten[central])
    ok = counts > 0
    x = 0.5 * (edges[1:] + edges[:-1])[ok]
    y = sums[ok] / counts[ok]
    half = x[y >= 0.5 * y.max()]
    fwhm = half.max() - half.min() + step
    if par_extent < 3.0 * fwhm:
        raise InsufficientDataError(
            f"ridge extent {par_extent:.3e} rad/s is below three phase-matching bandwidths")
    width0 = 2.0 * 1.39156 / max(fwhm, step)
    (a_fit, w_fit), _ = curve_fit(_sinc2, x, y, p0=(y.max(), width0), maxfev=20000)
    delta_mu = 2.0 * abs(w_fit) * (math.cos(th) + math.sin(th))
    dbs, dbi = gvm_from_angle(theta, delta_mu, length)
    return GvmResult(theta, delta_mu, dbs, dbi)


def synthetic_fringes(wavelengths, delta_mu, center_wavelength, phase0=0.0, contrast=1.0):
    """Walk-off fringes ``(1 + contrast cos(2 pi c dmu lambda / lambda0^2 + phase0)) / 2``."""
    lam = np.asarray(wavelengths, dtype=float)
    arg = 2.0 * np.pi * SPEED_OF_LIGHT * delta_mu * lam / center_wavelength**2 + phase0
    return 0.5 * (1.0 + contrast * np.cos(arg))


def fringe_period_to_delta_mu(wavelengths, spectrum, center_wavelength, min_periods=5,
                              significance=10.0):
    """Walk-off delay from the period of spectral fringes.

    The dominant Fourier component of the mean-subtracted spectrum gives a
    first estimate of the period, refined by a least-squares sinusoid fit.
    ``delta_mu = lambda0^2 / (c * period)``.

    Args:
        wavelengths (ndarray): uniformly spaced wavelengths in m
        spectrum (ndarray): measured intensity
        center_wavelength (float): lambda0 in m
        min_periods (float): minimum number of fringes in the window
        significance (float): required ratio of peak power to median power

    Returns:
        float: delta_mu in s
    """
    lam = np.asarray(wavelengths, dtype=float)
    y = np.asarray(spectrum, dtype=float)
    if lam.size < 16:
        raise InsufficientDataError("too few samples")
    order = np.argsort(lam)
    lam, y = lam[order], y[order]
    dl = np.mean(np.diff(lam))
    y0 = y - y.mean()
    if np.allclose(y0, 0.0, atol=1e-12 * max(1.0, abs(y.mean()))):
        raise NoFringeError("spectrum is constant")
    pad = 16 * lam.size
    spec = np.abs(np.fft.rfft(y0 * np.hanning(lam.size), pad)) ** 2
    freqs = np.fft.rfftfreq(pad, dl)
    k = int(np.argmax(spec[1:])) + 1
    if spec[k] < significance * np.median(spec[1:]):
        raise NoFringeError("no significant fringe peak")
    f0 = freqs[k]
    window = lam[-1] - lam[0]
    if f0 * window < min_periods:
        raise NoFringeError(f"only {f0 * window:.1f} fringe periods in the window")

    def model(x, a, f, ph, off):
        return off + a * np.cos(2.0 * np.pi * f * (x - lam[0]) + ph)

    a0 = np.sqrt(2.0) * y0.std()
    best = None
    for ph in np.linspace(0, 2 * np.pi, 8, endpoint=False):
        try:
            p, _ = curve_fit(model, lam, y, p0=(a0, f0, ph, y.mean()), maxfev=20000)
        except RuntimeError:
            continue
        res = np.sum((model(lam, *p) - y) ** 2)
        if best is None or res < best[0]:
            best = (res, p)
    f = abs(best[1][1]) if best is not None else f0
    return center_wavelength**2 * f / SPEED_OF_LIGHT


# -- PDC gain ---------------------------------------------------------------

def fit_gamma_pdc(measured_kappas, simulate_kappa, bracket=(10.0, 100.0), rtol=1e-5,
                  threshold=0.02, provenance=""):
    """gamma_pdc from kappa measurements by bisection.

    kappa increases monotonically with gamma_pdc, so the mean log residual
    ``mean(log kappa_sim - log kappa_meas)`` is increasing and its root is the
    least-squares solution in log space.

    Args:
        measured_kappas (sequence): (pulse energy in J, kappa) pairs
        simulate_kappa (callable): ``simulate_kappa(gamma_pdc, energy) -> kappa``
        bracket (tuple): search interval in W^-1/2 m^-1
        rtol (float): relative bisection tolerance
        threshold (float): RMS log residual below which the fit counts as converged
        provenance (str): data hash

    Returns:
        FitReport: fitted gamma_pdc
    """
    pts = [(float(e), float(k)) for e, k in measured_kappas]
    if not pts:
        raise InsufficientDataError("at least one (energy, kappa) point is required")
    if any(k <= 0 for _, k in pts):
        raise DomainError("kappa values must be positive")
    logk = np.log([k for _, k in pts])

    def residuals(g):
        return np.log([simulate_kappa(g, e) for e, _ in pts]) - logk

    value, it = bisect_monotone(lambda g: float(np.mean(residuals(g))), *bracket, rtol=rtol)
    rms = float(np.sqrt(np.mean(residuals(value) ** 2)))
    note = "" if rms < threshold else f"RMS log residual {rms:.3g} exceeds {threshold}"
    return FitReport("gamma_pdc", value, "W^-1/2 m^-1", rms, it, rms < threshold,
                     provenance, note)


def gamma_pdc_low_gain_inversion(energy, kappa_value, simulate_kappa, reference=28.0):
    """Closed-form low-gain inversion ``gamma = gamma_ref sqrt(kappa / kappa_ref)``.

    At low gain both per-mode ratios in kappa are linear in gamma_pdc, so kappa
    scales as gamma_pdc squared.
    """
    return reference * math.sqrt(kappa_value / simulate_kappa(reference, energy))


# -- cross-phase modulation -------------------------------------------------

def _unit(v):
    n = np.linalg.norm(v)
    if n == 0:
        raise InsufficientDataError("cut has zero norm")
    return v / n


def fit_xpm(cuts, simulate_cut, bracket=(-0.5, 0.5), xtol=1e-4, threshold=1e-3,
            provenance=""):
    """XPM couplings from low-gain diagonal cuts of the same-mode maps.

    Args:
        cuts (dict): ``{"signal": cut_s, "idler": cut_i}`` amplitude cuts
        simulate_cut (callable): ``simulate_cut(mode, gamma_xpm) -> cut`` on the same bins
        bracket (tuple): search interval in W^-1 m^-1
        xtol (float): tolerance on gamma_xpm
        threshold (float): objective below which a fit counts as converged
        provenance (str): data hash

    Returns:
        dict: FitReport for ``gamma_xpm_signal`` and ``gamma_xpm_idler``
    """
    out = {}
    for mode in ("signal", "idler"):
        target = _unit(np.asarray(cuts[mode], dtype=float))

        def obj(g, mode=mode, target=target):
            return float(np.sum((_unit(simulate_cut(mode, g)) - target) ** 2))

        value, fval, it = golden_section(obj, *bracket, xtol=xtol)
        note = ""
        if abs(value) < 0.005:
            note = "data are nearly symmetric; consistent with no XPM (wide confidence)"
        if min(abs(value - bracket[0]), abs(value - bracket[1])) < 2 * xtol:
            note = "optimum at the bracket edge"
        out[f"gamma_xpm_{mode}"] = FitReport(f"gamma_xpm_{mode}", value, "W^-1 m^-1", fval, it,
                                             fval < threshold and "edge" not in note,
                                             provenance, note)
    return out


# -- self-phase modulation --------------------------------------------------

def fit_spm(high_gain_scan, simulate_scan, bracket=(0.0, 1.5), xtol=1e-3, sensitivity=1e-2,
            provenance=""):
    """gamma_spm minimising the summed error metric against a high-gain scan.

    Args:
        high_gain_scan (SeedScanResult or dict): measured maps
        simulate_scan (callable): ``simulate_scan(gamma_spm) -> SeedScanResult``
        bracket (tuple): golden-section interval in W^-1 m^-1
        xtol (float): tolerance on gamma_spm
        sensitivity (float): minimum objective contrast across the bracket; the
            default corresponds to percent-level differences between the maps
        provenance (str): data hash

    Returns:
        FitReport: fitted gamma_spm; not converged when the objective is flat
    """
    cache = {}

    def obj(g):
        if g not in cache:
            cache[g] = float(sum(error_metric(high_gain_scan, simulate_scan(g)).values()))
        return cache[g]

    value, fval, it = golden_section(obj, *bracket, xtol=xtol)
    contrast = max(obj(bracket[0]), obj(bracket[1])) - fval
    flat = contrast < sensitivity
    note = ""
    if flat:
        note = f"objective is flat (contrast {contrast:.2e}); SPM is not resolved by these data"
        log.warning("fit_spm: %s", note)
    return FitReport("gamma_spm", value, "W^-1 m^-1", fval, it, not flat, provenance, note)


# -- filter phase ------------------------------------------------------------

def synthetic_interferogram(omega, pump_magnitude, phase, delay, reference=1.0):
    """``|b_ref|^2 + |b_p|^2 + 2 |b_ref| |b_p| cos(phi - dt w)``."""
    w = np.asarray(omega, dtype=float)
    bp = np.asarray(pump_magnitude, dtype=float)
    return reference**2 + bp**2 + 2.0 * reference * bp * np.cos(np.asarray(phase) - delay * w)


def retrieve_filter_phase(omega, interferogram, reference_level=0.0, support=1e-2,
                          separation=3.0):
    """Spectral phase from a self-referenced interferogram, modulo a linear term.

    The interferogram is Fourier transformed, the side band at positive delay
    is isolated, transformed back, and the linear part of its unwrapped
    argument is removed by a weighted fit. A positive delay of the filtered
    pulse relative to the reference is assumed.

    Args:
        omega (ndarray): uniformly spaced angular frequencies
        interferogram (ndarray): measured power spectrum
        reference_level (float): constant reference PSD subtracted first
        support (float): relative side-band magnitude defining where the phase is valid
        separation (float): required ratio of fringe delay to base-band width

    Returns:
        tuple: (phase array with NaN outside the support, boolean support mask)
    """
    w = np.asarray(omega, dtype=float)
    p = np.asarray(interferogram, dtype=float) - reference_level
    n = w.size
    dw = np.mean(np.diff(w))
    f = np.fft.fft(p - p.mean())
    t = np.fft.fftfreq(n, dw / (2.0 * np.pi))
    pos = t > 0
    mag = np.abs(f)
    if not np.any(pos) or mag[pos].max() == 0:
        raise SeparationError("no side band found")
    # base-band delay width is the inverse RMS spectral width of the pulse
    wgt = np.abs(p)
    w0 = np.sum(w * wgt) / np.sum(wgt)
    base_width = 1.0 / np.sqrt(np.sum((w - w0) ** 2 * wgt) / np.sum(wgt))
    outside = t > 2.0 * base_width
    if not np.any(outside):
        raise SeparationError("delay axis too short to resolve the side band")
    k_peak = np.argmax(np.where(outside, mag, 0.0))
    t_peak = t[k_peak]
    if mag[k_peak] < 1e-3 * mag[pos].max() or t_peak < separation * 2.0 * base_width:
        raise SeparationError(
            f"side band at {t_peak:.3e} s overlaps the base band of width {base_width:.3e} s")
    # the positive-delay lobe carries exp(-i(phi - dt w)), hence the conjugate
    side = np.conj(np.fft.ifft(np.where(t > 0.5 * t_peak, f, 0.0)))
    env = np.abs(side)
    mask = env >= support * env.max()
    ph = np.unwrap(np.angle(side))
    coef = np.polyfit(w[mask], ph[mask], 1, w=env[mask])
    out = ph - np.polyval(coef, w)
    out[~mask] = np.nan
    return out, mask


# -- full protocol -----------------------------------------------------------

@dataclass
class CalibrationModel:
    """Simulation context shared by the fits.

    Args:
        crystal: crystal template carrying the current parameter estimates
        pump: pump shape (rescaled per energy)
        scan_config: seed-scan settings used for synthetic comparison
    """

    crystal: object
    pump: object
    scan_config: object

    def scan(self, crystal, energy):
        tm = propagate(crystal, self.pump.with_energy(energy))
        return run_seed_scan(tm, self.scan_config)

    def kappa(self, crystal, energy):
        return kappa(self.scan(crystal, energy))

    def cut(self, crystal, energy, mode):
        key = "ss" if mode == "signal" else "ii"
        return diagonal_cut(self.scan(crystal, energy), key)[1]


@dataclass
class CalibrationData:
    """Measured inputs of the calibration protocol.

    Args:
        kappas: (energy, kappa) pairs
        low_gain_energy: energy of the low-gain diagonal cuts
        cuts: ``{"signal": ..., "idler": ...}`` diagonal amplitude cuts
        high_gain_energy: energy of the high-gain scan
        high_gain_scan: SeedScanResult or dict of maps
        pm_map: optional phase-matching map with ``pm_axes`` (signal, idler detunings)
        fringes: optional (wavelengths, spectrum, center wavelength)
        source_hash: hash of the raw data files; replaces the array hash when set
    """

    kappas: list
    low_gain_energy: float
    cuts: dict
    high_gain_energy: float
    high_gain_scan: object
    pm_map: np.ndarray | None = None
    pm_axes: tuple | None = None
    fringes: tuple | None = None
    source_hash: str = ""

    def provenance(self) -> str:
        if self.source_hash:
            return self.source_hash
        parts = [np.array(self.kappas, dtype=float).ravel(), self.cuts["signal"],
                 self.cuts["idler"]]
        scan = self.high_gain_scan
        maps = scan.maps if hasattr(scan, "maps") else scan
        parts += [maps[k] for k in ("ss", "si", "ii", "is")]
        if self.pm_map is not None:
            parts.append(np.abs(self.pm_map))
        if self.fringes is not None:
            parts += [self.fringes[0], self.fringes[1]]
        return data_hash(*parts)


COUPLED = ("gamma_pdc", "gamma_xpm_signal", "gamma_xpm_idler", "gamma_spm")


def _changed(a, b, tol):
    """True when any coupled parameter moved by more than ``tol`` (relative, floor 0.01)."""
    return any(abs(getattr(a, k) - getattr(b, k)) > tol * max(abs(getattr(b, k)), 0.01)
               for k in COUPLED)


def calibrate_pipeline(data, model, passes=6, gamma_bracket=(10.0, 100.0),
                       xpm_bracket=(-0.5, 0.5), spm_bracket=(0.0, 1.5), tol=2e-3):
    """Run the fits in protocol order, repeating the coupled fits until they settle.

    gamma_pdc, the XPM couplings and gamma_spm influence each other's
    observables, so each fit is repeated with the other estimates updated
    until no coupled parameter changes by more than ``tol`` over a pass.

    Args:
        data (CalibrationData): measurements
        model (CalibrationModel): simulation context with initial estimates
        passes (int): maximum number of sweeps over the coupled fits
        tol (float): relative change that ends the iteration

    Returns:
        tuple: (ordered dict of FitReports, final crystal)
    """
    prov = data.provenance()
    crystal = model.crystal
    reports = {}
    if data.pm_map is not None or data.fringes is not None:
        theta = None
        dmu = None
        if data.pm_map is not None:
            gvm = fit_gvm_from_pm_profile(data.pm_map, crystal.length, *data.pm_axes)
            theta, dmu = gvm.theta_pm_deg, gvm.delta_mu
            reports["theta_pm"] = FitReport("theta_pm", theta, "deg", 0.0, 1, True, prov)
        if data.fringes is not None:
            dmu = fringe_period_to_delta_mu(*data.fringes)
            reports["delta_mu"] = FitReport("delta_mu", dmu, "s", 0.0, 1, True, prov,
                                            "from walk-off fringes")
        elif dmu is not None:
            reports["delta_mu"] = FitReport("delta_mu", dmu, "s", 0.0, 1, True, prov,
                                            "from phase-matching profile width")
        if theta is None:
            theta = math.degrees(math.atan(-crystal.dbeta_signal / crystal.dbeta_idler))
        dbs, dbi = gvm_from_angle(theta, dmu, crystal.length)
        crystal = crystal.replace(dbeta_signal=dbs, dbeta_idler=dbi)
        reports["dbeta_signal"] = FitReport("dbeta_signal", dbs, "s/m", 0.0, 1, True, prov)
        reports["dbeta_idler"] = FitReport("dbeta_idler", dbi, "s/m", 0.0, 1, True, prov)

    done = 0
    settled = False
    for p in range(passes):
        before = crystal
        cur = crystal
        rep = fit_gamma_pdc(data.kappas,
                            lambda g, e: model.kappa(cur.replace(gamma_pdc=g), e),
                            bracket=gamma_bracket, provenance=prov)
        crystal = crystal.replace(gamma_pdc=rep.value)
        reports["gamma_pdc"] = rep

        cur = crystal

        def sim_cut(mode, g):
            name = "gamma_xpm_signal" if mode == "signal" else "gamma_xpm_idler"
            return model.cut(cur.replace(**{name: g}), data.low_gain_energy, mode)

        xpm = fit_xpm(data.cuts, sim_cut, bracket=xpm_bracket, provenance=prov)
        crystal = crystal.replace(gamma_xpm_signal=xpm["gamma_xpm_signal"].value,
                                  gamma_xpm_idler=xpm["gamma_xpm_idler"].value)
        reports.update(xpm)

        cur = crystal
        rep = fit_spm(data.high_gain_scan,
                      lambda g: model.scan(cur.replace(gamma_spm=g), data.high_gain_energy),
                      bracket=spm_bracket, provenance=prov)
        crystal = crystal.replace(gamma_spm=rep.value)
        reports["gamma_spm"] = rep
        log.info("calibration pass %d: gamma_pdc=%.4g xpm_s=%.4g xpm_i=%.4g spm=%.4g",
                 p + 1, crystal.gamma_pdc, crystal.gamma_xpm_signal,
                 crystal.gamma_xpm_idler, crystal.gamma_spm)
        done = p + 1
        if p > 0 and not _changed(crystal, before, tol):
            settled = True
            break
    for r in reports.values():
        if r.parameter in COUPLED:
            r.note = (r.note + "; " if r.note else "") + f"after {done} pass(es)"
            if not settled:
                r.converged = False
                r.note += f"; estimates still moving by more than {tol:g} after the last pass"
    return reports, crystal
