import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import PUMP_FWHM
from twinbeam.errors import CoverageError, DomainError, ResolutionError
from twinbeam.grid import SPEED_OF_LIGHT, make_grid
from twinbeam.pump import (PumpAutocorrelation, PumpSpectrum, apply_chirp, autocorrelation,
                           dispersion_to_gdd, gaussian_pump, load_pump_table,
                           propagate_spm, tabulated_pump)


def rk4_spm(beta, eps_hat, gamma, length, steps):
    """Reference integrator for d beta / dz = i gamma eps_hat beta."""
    h = length / steps
    f = lambda b: 1j * gamma * (eps_hat @ b)
    b = beta.copy()
    for _ in range(steps):
        k1 = f(b)
        k2 = f(b + 0.5 * h * k1)
        k3 = f(b + 0.5 * h * k2)
        k4 = f(b + h * k3)
        b = b + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return b


def random_pump(grid, rng, energy=1e-10):
    amp = rng.normal(size=grid.pump_size) + 1j * rng.normal(size=grid.pump_size)
    amp *= np.exp(-(grid.pump_detunings / (0.1 * grid.pump_detunings.max())) ** 2)
    return PumpSpectrum(grid, amp * np.sqrt(energy / (np.sum(abs(amp) ** 2) * grid.spacing)),
                        energy)


class TestGaussianPump:
    def test_normalisation(self, grid64):
        p = gaussian_pump(grid64, 125e-12, PUMP_FWHM)
        assert p.energy() == pytest.approx(125e-12, rel=1e-12)
        assert p.pulse_energy == 125e-12

    def test_fwhm(self, grid64):
        p = gaussian_pump(grid64, 1e-12, PUMP_FWHM)
        inten = np.abs(p.amplitudes) ** 2
        w = grid64.pump_detunings
        fine = np.linspace(w[0], w[-1], 200001)
        above = fine[np.interp(fine, w, inten) >= 0.5 * inten.max()]
        assert above[-1] - above[0] == pytest.approx(PUMP_FWHM, rel=0.02)
        # rms width of |beta|^2 is sigma_amp / sqrt 2
        sigma = PUMP_FWHM / (2 * np.sqrt(np.log(2)))
        assert p.rms_bandwidth() == pytest.approx(sigma / np.sqrt(2), rel=1e-3)

    def test_zero_energy(self, grid64):
        p = gaussian_pump(grid64, 0.0, PUMP_FWHM)
        assert not np.any(p.amplitudes)

    def test_resolution_error(self, grid64):
        with pytest.raises(ResolutionError):
            gaussian_pump(grid64, 1e-12, 2.0 * grid64.spacing)

    def test_bad_inputs(self, grid64):
        with pytest.raises(DomainError):
            gaussian_pump(grid64, -1.0, PUMP_FWHM)
        with pytest.raises(DomainError):
            gaussian_pump(grid64, 1e-12, 0.0)

    def test_offset_center(self, grid64):
        c = grid64.center_pump + 5 * grid64.spacing
        p = gaussian_pump(grid64, 1e-12, PUMP_FWHM, center=c)
        assert grid64.pump_frequencies[np.argmax(abs(p.amplitudes))] == pytest.approx(c)

    @given(st.floats(min_value=1e-15, max_value=1e-8), st.floats(min_value=4.0, max_value=40.0))
    def test_normalisation_property(self, energy, width_bins):
        g = make_grid(1563e-9, 1569e-9, 5e13, 32, 2)
        p = gaussian_pump(g, energy, width_bins * g.spacing)
        assert p.energy() == pytest.approx(energy, rel=1e-10)

    def test_with_energy(self, pump64):
        q = pump64.with_energy(500e-12)
        assert q.energy() == pytest.approx(500e-12, rel=1e-12)
        np.testing.assert_allclose(np.abs(q.amplitudes) / np.abs(q.amplitudes).max(),
                                   np.abs(pump64.amplitudes) / np.abs(pump64.amplitudes).max())

    def test_immutable(self, pump64):
        with pytest.raises(ValueError):
            pump64.amplitudes[0] = 1.0

    def test_shape_check(self, grid64):
        with pytest.raises(DomainError):
            PumpSpectrum(grid64, np.zeros(3), 0.0)
        with pytest.raises(DomainError):
            PumpSpectrum(grid64, np.full(grid64.pump_size, np.nan), 0.0)


class TestTabulated:
    def table_from(self, pump, phase=None):
        w = pump.grid.pump_frequencies
        ph = np.zeros_like(w) if phase is None else phase
        return np.column_stack([w, np.abs(pump.amplitudes), ph])

    def test_flat_top(self, grid64):
        w = grid64.pump_frequencies
        band = np.abs(grid64.pump_detunings) < 10 * grid64.spacing
        table = np.column_stack([w[band], np.ones(band.sum()), np.zeros(band.sum())])
        # edges are truncated inside the lattice, which is only allowed when the edge decays
        with pytest.raises(CoverageError):
            tabulated_pump(grid64, table, 1e-12)
        table[[0, -1], 1] = 0.0
        p = tabulated_pump(grid64, table, 1e-12)
        assert p.energy() == pytest.approx(1e-12, rel=1e-12)

    def test_matches_gaussian(self, pump64):
        # [DERIVED] resampling a sampled Gaussian on its own lattice
        p = tabulated_pump(pump64.grid, self.table_from(pump64), pump64.pulse_energy)
        np.testing.assert_allclose(p.amplitudes, pump64.amplitudes, rtol=0, atol=1e-6 * abs(
            pump64.amplitudes).max())

    def test_quadratic_phase_equals_chirp(self, pump64):
        # [DERIVED] a quadratic phase column must reproduce apply_chirp
        d = 178e-6
        phi2 = dispersion_to_gdd(d, 2 * np.pi * SPEED_OF_LIGHT / pump64.grid.center_pump)
        phase = 0.5 * phi2 * pump64.grid.pump_detunings**2
        p = tabulated_pump(pump64.grid, self.table_from(pump64, phase), pump64.pulse_energy)
        q = apply_chirp(pump64, d)
        np.testing.assert_allclose(p.amplitudes, q.amplitudes, atol=1e-9 * abs(
            q.amplitudes).max())

    def test_no_overlap(self, grid64):
        table = np.array([[1.0, 1.0, 0.0], [2.0, 1.0, 0.0]])
        with pytest.raises(CoverageError):
            tabulated_pump(grid64, table, 1e-12)

    def test_power_outside_lattice(self, pump64):
        t = self.table_from(pump64)
        extra = np.array([[t[-1, 0] + pump64.grid.spacing, t[:, 1].max(), 0.0]])
        with pytest.raises(CoverageError):
            tabulated_pump(pump64.grid, np.vstack([t, extra]), 1e-12)

    def test_non_monotone(self, pump64):
        t = self.table_from(pump64)[::-1]
        with pytest.raises(DomainError):
            tabulated_pump(pump64.grid, t, 1e-12)

    def test_file_round_trip(self, pump64, tmp_path):
        path = tmp_path / "pump.csv"
        np.savetxt(path, self.table_from(pump64), delimiter=",",
                   header="omega_rad_s, magnitude, phase_rad", comments="")
        p = tabulated_pump(pump64.grid, load_pump_table(path), pump64.pulse_energy)
        np.testing.assert_allclose(p.amplitudes, pump64.amplitudes,
                                   atol=1e-9 * abs(pump64.amplitudes).max())

    def test_bad_header(self, tmp_path):
        path = tmp_path / "pump.csv"
        path.write_text("w, a, b\n1,2,3\n")
        with pytest.raises(DomainError):
            load_pump_table(path)


class TestChirp:
    def test_zero_dispersion_identity(self, pump64):
        assert apply_chirp(pump64, 0.0) is pump64

    def test_gdd_value(self):
        # [DERIVED] -D lambda^2 / (2 pi c), D = 178 fs/nm = 178e-6 s/m
        phi2 = dispersion_to_gdd(178e-6, 783e-9)
        assert phi2 == pytest.approx(-178e-6 * 783e-9**2 / (2 * np.pi * SPEED_OF_LIGHT))
        assert phi2 == pytest.approx(-5.79e-26, rel=2e-3)

    def test_pure_phase(self, pump64):
        q = apply_chirp(pump64, 250e-6, cubic=1e-39)
        np.testing.assert_allclose(np.abs(q.amplitudes), np.abs(pump64.amplitudes), rtol=1e-14)
        assert q.energy() == pytest.approx(pump64.energy(), rel=1e-13)
        assert q.chirp["gdd_s2"] == pytest.approx(dispersion_to_gdd(250e-6, 2 * np.pi *
                                                  SPEED_OF_LIGHT / pump64.grid.center_pump))
        assert q.chirp["tod_s3"] == 1e-39

    def test_positive_dispersion_delays_red(self, pump64):
        # fields go as exp(-i w t), so the group delay is +d phi / d w = phi2 w,
        # which grows towards lower frequency for phi2 < 0
        q = apply_chirp(pump64, 178e-6)
        w = pump64.grid.pump_detunings
        phase = np.unwrap(np.angle(q.amplitudes))
        core = np.abs(w) < PUMP_FWHM
        delay = np.gradient(phase, w)[core]
        assert delay[0] > delay[-1]

    def test_chirps_compose(self, pump64):
        a = apply_chirp(apply_chirp(pump64, 100e-6), 78e-6)
        b = apply_chirp(pump64, 178e-6)
        np.testing.assert_allclose(a.amplitudes, b.amplitudes, atol=1e-12 * abs(
            b.amplitudes).max())


class TestAutocorrelation:
    def test_zero_lag_is_energy(self, grid64, rng):
        p = random_pump(grid64, rng)
        eps = autocorrelation(p)
        assert eps.pulse_energy == pytest.approx(p.pulse_energy, rel=1e-12)

    def test_hermitian(self, grid64, rng):
        eps = autocorrelation(random_pump(grid64, rng))
        q = np.arange(1, 50)
        np.testing.assert_allclose(eps.at(-q), np.conj(eps.at(q)), rtol=1e-12, atol=0)
        m = eps.matrix(40)
        np.testing.assert_allclose(m, m.conj().T)

    def test_real_even_for_real_symmetric_pump(self, pump64):
        eps = autocorrelation(pump64)
        q = np.arange(0, 60)
        assert np.max(np.abs(eps.at(q).imag)) < 1e-14 * eps.pulse_energy
        np.testing.assert_allclose(eps.at(q), eps.at(-q), rtol=1e-12)

    def test_gaussian_width(self, pump64):
        # [DERIVED] amplitude Gaussian of std s correlates into a Gaussian of std s sqrt 2
        eps = autocorrelation(pump64)
        g = pump64.grid
        q = np.arange(-g.pump_size + 1, g.pump_size)
        lag = q * g.spacing
        mag = np.abs(eps.at(q))
        width = np.sqrt(np.sum(lag**2 * mag) / np.sum(mag))
        s = PUMP_FWHM / (2 * np.sqrt(np.log(2)))
        assert width == pytest.approx(s * np.sqrt(2), rel=1e-6)

    def test_brute_force_definition(self, grid32, rng):
        p = random_pump(grid32, rng)
        b = p.amplitudes
        n = b.size
        eps = autocorrelation(p)
        for q in (-7, 0, 3, 20):
            direct = sum(np.conj(b[m - q]) * b[m] for m in range(n) if 0 <= m - q < n)
            assert eps.at(q) == pytest.approx(direct * grid32.spacing, rel=1e-12, abs=1e-30)

    def test_out_of_range(self, pump64):
        eps = autocorrelation(pump64)
        with pytest.raises(CoverageError):
            eps.at(pump64.grid.pump_size)

    def test_length_check(self, grid64):
        with pytest.raises(DomainError):
            PumpAutocorrelation(grid64, np.zeros(5))


class TestSpm:
    def test_zero_gamma_identity(self, pump64):
        eps = autocorrelation(pump64)
        q = propagate_spm(pump64, eps, 0.0, 1e-3)
        np.testing.assert_array_equal(q.amplitudes, pump64.amplitudes)
        assert q.z_position == pytest.approx(1e-3)

    def test_negative_step(self, pump64):
        with pytest.raises(DomainError):
            propagate_spm(pump64, autocorrelation(pump64), 0.5, -1e-3)

    @given(st.floats(min_value=-2.0, max_value=2.0), st.floats(min_value=0.0, max_value=0.05))
    def test_energy_conserved(self, gamma, dz):
        g = make_grid(1563e-9, 1569e-9, 5e13, 32, 2)
        p = gaussian_pump(g, 600e-12, 8 * g.spacing)
        q = propagate_spm(p, autocorrelation(p), gamma, dz)
        assert q.energy() == pytest.approx(p.energy(), rel=1e-10)

    def test_composition(self, pump64):
        eps = autocorrelation(pump64.with_energy(600e-12))
        p = pump64.with_energy(600e-12)
        a = propagate_spm(propagate_spm(p, eps, 0.56, 3e-3), eps, 0.56, 5e-3)
        b = propagate_spm(p, eps, 0.56, 8e-3)
        np.testing.assert_allclose(a.amplitudes, b.amplitudes,
                                   atol=1e-10 * abs(b.amplitudes).max())

    def test_matches_rk4(self, grid32):
        # [DERIVED] independent fine-step RK4 integration of the same linear ODE
        p = gaussian_pump(grid32, 600e-12, 6 * grid32.spacing)
        eps = autocorrelation(p)
        exact = propagate_spm(p, eps, 0.56, 8e-3).amplitudes
        ref = rk4_spm(p.amplitudes, eps.matrix(), 0.56, 8e-3, 2000)
        err = np.linalg.norm(exact - ref) / np.linalg.norm(ref)
        assert err < 1e-6

    def test_single_bin_phase_rotation(self, grid32):
        # a one-bin pump has eps_hat = E dw * identity: pure phase exp(i gamma E dw dz)
        amp = np.zeros(grid32.pump_size, dtype=complex)
        k = grid32.pump_size // 2
        energy = 1e-10
        amp[k] = np.sqrt(energy / grid32.spacing)
        p = PumpSpectrum(grid32, amp, energy)
        q = propagate_spm(p, autocorrelation(p), 0.56, 8e-3)
        expected = amp[k] * np.exp(1j * 0.56 * energy * grid32.spacing * 8e-3)
        assert q.amplitudes[k] == pytest.approx(expected, rel=1e-12)
        assert np.count_nonzero(np.abs(q.amplitudes) > 1e-12 * abs(amp[k])) == 1
        ref = rk4_spm(amp, autocorrelation(p).matrix(), 0.56, 8e-3, 50)
        assert ref[k] == pytest.approx(expected, rel=1e-10)

    def test_spm_broadens_spectrum(self, pump64):
        p = pump64.with_energy(600e-12)
        q = propagate_spm(p, autocorrelation(p), 0.56, 8e-3)
        assert q.rms_bandwidth() > 1.05 * p.rms_bandwidth()

    def test_delay_covariance(self, pump64):
        # a linear spectral phase (pure delay) commutes with SPM when eps is recomputed
        p = pump64.with_energy(600e-12)
        tau = 0.3e-12
        ramp = np.exp(1j * tau * p.grid.pump_detunings)
        delayed = p.replace(amplitudes=p.amplitudes * ramp)
        a = propagate_spm(delayed, autocorrelation(delayed), 0.56, 8e-3).amplitudes
        b = propagate_spm(p, autocorrelation(p), 0.56, 8e-3).amplitudes * ramp
        np.testing.assert_allclose(a, b, atol=1e-10 * abs(b).max())
