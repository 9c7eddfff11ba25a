import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import erfi

from conftest import BASE_SPAN, LAMBDA_I, LAMBDA_S, PUMP_FWHM, reference_crystal
from twinbeam.errors import DomainError, SingularityError
from twinbeam.grid import make_grid
from twinbeam.perturbative import (GaussianModel, first_order_jsa, gauss_erfi,
                                   gaussian_first_order_jsa, low_gain_mean_photons,
                                   low_gain_mean_photons_from_gvm, phase_matching_angle,
                                   phase_matching_function, phase_matching_quadrature,
                                   second_order_same_mode)
from twinbeam.propagator import EffectiveTopHat, ExplicitPoling, GaussianProfile, propagate
from twinbeam.pump import gaussian_pump

L = 8e-3


def gaussian_model(energy=125e-12, gamma_pdc=28.0):
    return GaussianModel.from_fwhm(PUMP_FWHM, ell=L, dbeta_signal=1.70e-10,
                                   dbeta_idler=-1.02e-10, gamma_pdc=gamma_pdc,
                                   pulse_energy=energy)


class TestPhaseMatching:
    def test_top_hat_peak(self):
        # [DERIVED] L / sqrt(2 pi)
        assert phase_matching_function(0.0, length=L) == pytest.approx(3.1915e-3, rel=1e-4)

    def test_top_hat_first_side_lobe(self):
        dk = np.linspace(2 * np.pi / L, 4 * np.pi / L, 20001)
        lobe = np.max(np.abs(phase_matching_function(dk, length=L)))
        assert lobe / abs(phase_matching_function(0.0, length=L)) == pytest.approx(0.2172, abs=1e-3)
        assert abs(phase_matching_function(2 * np.pi / L, length=L)) < 1e-18

    @pytest.mark.parametrize("poling", [EffectiveTopHat(), GaussianProfile(truncation=8.0),
                                        ExplicitPoling(period=1e-3, duty=0.3)])
    def test_closed_form_matches_quadrature(self, poling):
        # [DERIVED] adaptive quadrature of the defining integral
        rng = np.random.default_rng(7)
        for dk in rng.uniform(-3e3, 3e3, 100):
            exact = phase_matching_function(dk, poling, L)
            ref = phase_matching_quadrature(dk, poling, L)
            assert abs(exact - ref) <= 1e-8 * abs(phase_matching_function(0.0, poling, L)) + 1e-8 * abs(ref)

    def test_gaussian_peak(self):
        g = 0.193
        assert phase_matching_function(0.0, GaussianProfile(), L).real == pytest.approx(
            (np.pi * g / 2) ** -0.25 * np.sqrt(g / 2) * L)

    def test_length_required(self):
        with pytest.raises(DomainError):
            phase_matching_function(0.0, length=0.0)

    @given(st.floats(min_value=-1e4, max_value=1e4))
    def test_top_hat_even_real(self, dk):
        a = phase_matching_function(dk, length=L)
        b = phase_matching_function(-dk, length=L)
        assert a == b and a.imag == 0


class TestGeometry:
    def test_phase_matching_angle(self):
        # [DERIVED] atan(1.70 / 1.02)
        assert phase_matching_angle(1.70e-10, -1.02e-10) == pytest.approx(59.04, abs=0.01)
        assert phase_matching_angle(1e-10, 0.0) == 90.0

    def test_low_gain_photon_number(self):
        # [DERIVED] 28^2 * 125e-12 * 8e-3 / 2.72e-10
        n = low_gain_mean_photons_from_gvm(28.0, 125e-12, L, 2.72e-10)
        assert n == pytest.approx(2.882, rel=1e-3)
        v_p = 1.5e8
        v_s = 1 / (1 / v_p + 1.70e-10)
        v_i = 1 / (1 / v_p - 1.02e-10)
        assert low_gain_mean_photons(28.0, 125e-12, L, v_s, v_i) == pytest.approx(n, rel=1e-6)

    def test_singular(self):
        with pytest.raises(SingularityError):
            low_gain_mean_photons(28.0, 1e-12, L, 1.5e8, 1.5e8)
        with pytest.raises(DomainError):
            low_gain_mean_photons(28.0, 1e-12, L, -1.0, 1.5e8)

    @given(st.floats(min_value=0.1, max_value=100), st.floats(min_value=1e-15, max_value=1e-9))
    def test_linear_in_energy(self, gamma, energy):
        a = low_gain_mean_photons_from_gvm(gamma, energy, L, 2.72e-10)
        b = low_gain_mean_photons_from_gvm(gamma, 2 * energy, L, 2.72e-10)
        assert b == pytest.approx(2 * a, rel=1e-12)


class TestGaussErfi:
    def test_matches_scipy_small_x(self):
        x = np.linspace(-4, 4, 81)
        ref = np.exp(-(x**2)) * (1 + 1j * erfi(x))
        np.testing.assert_allclose(gauss_erfi(x), ref, rtol=1e-12)

    def test_large_argument_finite(self):
        x = np.array([30.0, 300.0, 1e6])
        out = gauss_erfi(x)
        assert np.all(np.isfinite(out))
        # asymptote exp(-x^2) erfi(x) -> 1 / (sqrt(pi) x)
        np.testing.assert_allclose(out.imag, 1 / (np.sqrt(np.pi) * x), rtol=1e-3)

    @given(st.floats(min_value=-50, max_value=50))
    def test_conjugate_symmetry(self, x):
        assert gauss_erfi(-x) == pytest.approx(np.conj(gauss_erfi(x)), abs=1e-15)


class TestFirstOrder:
    def test_gaussian_closed_form_matches_sampled(self, grid64):
        # [DERIVED] F * Phi on the grid equals the double-Gaussian closed form
        model = gaussian_model()
        c = reference_crystal(poling=GaussianProfile())
        pump = gaussian_pump(grid64, model.pulse_energy, PUMP_FWHM)
        a = first_order_jsa(pump, c)
        b = gaussian_first_order_jsa(model, grid64)
        assert np.linalg.norm(a - b) / np.linalg.norm(b) < 1e-8

    def test_exponent_matrix(self):
        m = gaussian_model()
        assert m.exponent_matrix[0, 1] == m.exponent_matrix[1, 0]
        assert m.mu_signal_sq > 0 and m.mu_idler_sq > 0

    def test_pump_amplitude_norm(self):
        m = gaussian_model()
        w = np.linspace(-10, 10, 4001) * m.sigma
        e = np.sum(m.pump_amplitude(w) ** 2) * (w[1] - w[0])
        assert e == pytest.approx(m.pulse_energy, rel=1e-10)

    def test_bad_model(self):
        with pytest.raises(DomainError):
            GaussianModel(sigma=0.0, ell=L, dbeta_signal=1e-10, dbeta_idler=-1e-10,
                          gamma_pdc=1.0, pulse_energy=1e-12)

    def test_propagator_low_gain_top_hat(self, grid64):
        # low-gain cross block equals the first-order JSA
        c = reference_crystal(gamma_pdc=0.5, gamma_xpm_signal=0.0, gamma_xpm_idler=0.0,
                           gamma_spm=0.0)
        pump = gaussian_pump(grid64, 1e-12, PUMP_FWHM)
        u = propagate(c, pump).functions()["si"]
        ref = first_order_jsa(pump, c)
        assert np.linalg.norm(u - ref) / np.linalg.norm(ref) < 1e-3


class TestSecondOrder:
    def test_antidiagonal_real_positive(self, grid64):
        u = second_order_same_mode(gaussian_model(), grid64)
        anti = np.fliplr(u).diagonal()
        # the grid is symmetric about zero only up to one bin, so use W + W'' = 0 pairs
        w = grid64.detunings
        i = np.arange(1, grid64.n_points)
        j = grid64.n_points - i
        assert np.allclose(w[i] + w[j], 0.0, atol=1e-6 * grid64.spacing)
        vals = u[i, j]
        assert np.all(vals.real > 0) and np.max(np.abs(vals.imag)) < 1e-12 * np.max(vals.real)
        assert anti.shape[0] == grid64.n_points

    def test_pi_phase_jump(self):
        # the phase approaches +pi/2 and -pi/2 on either side of W + W'' = 0
        g = make_grid(LAMBDA_S, LAMBDA_I, 40 * BASE_SPAN, 256, 1)
        m = gaussian_model()
        u = second_order_same_mode(m, g)
        dinv = m.dbeta_signal - m.dbeta_idler
        scale = 0.5 * np.sqrt(m.gamma) * L * dinv / (2 * m.sigma * np.sqrt(m.mu_idler_sq))
        w = g.detunings
        k_pos = np.argmin(np.abs(2 * w * scale - 3.0))
        k_neg = np.argmin(np.abs(2 * w * scale + 3.0))
        jump = np.angle(u[k_pos, k_pos]) - np.angle(u[k_neg, k_neg])
        assert abs(abs(jump) - np.pi) < 0.05

    def test_linear_in_energy(self, grid64):
        a = second_order_same_mode(gaussian_model(100e-12), grid64, "idler")
        b = second_order_same_mode(gaussian_model(300e-12), grid64, "idler")
        np.testing.assert_allclose(b, 3 * a, rtol=1e-12)

    def test_conventions_are_conjugate(self, grid64):
        m = gaussian_model()
        for mode in ("signal", "idler"):
            a = second_order_same_mode(m, grid64, mode, "printed")
            b = second_order_same_mode(m, grid64, mode, "equations")
            np.testing.assert_allclose(b, np.conj(a), rtol=1e-12, atol=0)

    def test_bad_arguments(self, grid64):
        with pytest.raises(DomainError):
            second_order_same_mode(gaussian_model(), grid64, "pump")
        with pytest.raises(DomainError):
            second_order_same_mode(gaussian_model(), grid64, convention="other")
