import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import unitary_group

from conftest import LAMBDA_I, LAMBDA_S, reference_crystal
from twinbeam.decomposition import (SWEEP_HEADER, SchmidtData, mean_photons, schmidt_decompose,
                                    schmidt_number, svd_consistency, sweep_gain)
from twinbeam.errors import DomainError, IntegrityError
from twinbeam.grid import make_grid
from twinbeam.propagator import TransferMatrices, propagate


def synthetic_map(grid, r, seed=0):
    """Bogoliubov blocks with prescribed squeezing and random Haar mode bases."""
    n = grid.n_points
    r = np.concatenate([r, np.zeros(n - len(r))])
    rs, ri, ts, ti = (unitary_group.rvs(n, random_state=seed + k) for k in range(4))
    c, s = np.cosh(r), np.sinh(r)
    return TransferMatrices((rs * c) @ ts.conj().T, (rs * s) @ ti.T, (ri * c) @ ti.conj().T,
                            (ri * s) @ ts.T, grid), (rs, ri, ts, ti)


class TestScalars:
    def test_single_mode(self):
        # [DERIVED] sinh^2(0.5)
        assert mean_photons([0.5]) == pytest.approx(0.27154, rel=1e-4)
        assert schmidt_number([0.5]) == 1.0

    def test_two_equal_modes(self):
        assert schmidt_number([0.7, 0.7]) == pytest.approx(2.0)

    def test_unequal_modes(self):
        # [DERIVED] (1.3811 + 0.2715)^2 / (1.3811^2 + 0.2715^2)
        assert schmidt_number([1.0, 0.5]) == pytest.approx(1.3786, rel=1e-4)

    def test_vacuum(self):
        assert schmidt_number([0.0, 0.0]) == 1.0
        assert mean_photons([]) == 0.0

    def test_truncation(self):
        assert schmidt_number([1.0, 1e-9]) == 1.0

    def test_from_squeezing(self):
        sd = SchmidtData.from_squeezing([0.1, 0.5])
        np.testing.assert_array_equal(sd.r, [0.5, 0.1])
        assert sd.significant() == 2
        with pytest.raises(DomainError):
            SchmidtData.from_squeezing([-0.1])

    @given(st.lists(st.floats(min_value=0.0, max_value=3.0), min_size=1, max_size=12))
    def test_bounds(self, r):
        k = schmidt_number(r)
        assert 1.0 - 1e-12 <= k <= len(r) + 1e-12


class TestDecompose:
    def test_recovers_squeezing(self, grid32):
        r = np.array([1.2, 0.8, 0.3, 0.05])
        tm, (rs, _, _, _) = synthetic_map(grid32, r)
        sd = schmidt_decompose(tm)
        np.testing.assert_allclose(sd.r[:4], r, atol=1e-12)
        assert np.max(sd.r[4:]) < 1e-7
        # leading output mode equals the constructed one up to a global phase
        assert abs(np.vdot(rs[:, 0], sd.output_signal[:, 0])) == pytest.approx(1.0, abs=1e-10)
        assert sd.reconstruction_error < 1e-12

    def test_rank_one(self, grid32):
        tm, _ = synthetic_map(grid32, np.array([0.9]))
        sd = schmidt_decompose(tm)
        assert sd.schmidt_number == pytest.approx(1.0)
        assert sd.mean_photons == pytest.approx(np.sinh(0.9) ** 2, rel=1e-12)

    def test_vacuum_map(self, grid32):
        n = grid32.n_points
        z = np.zeros((n, n))
        sd = schmidt_decompose(TransferMatrices(np.eye(n), z, np.eye(n), z, grid32))
        assert sd.mean_photons == 0.0 and sd.schmidt_number == 1.0

    def test_modes_orthonormal(self, crystal, pump64):
        sd = schmidt_decompose(propagate(crystal, pump64))
        n = pump64.grid.n_points
        for m in (sd.output_signal, sd.output_idler, sd.input_signal, sd.input_idler):
            np.testing.assert_allclose(m.conj().T @ m, np.eye(n), atol=1e-9)

    def test_phase_fixing(self, crystal, pump64):
        sd = schmidt_decompose(propagate(crystal, pump64))
        lead = sd.output_signal[np.argmax(np.abs(sd.output_signal[:, 0])), 0]
        assert lead.imag == pytest.approx(0.0, abs=1e-14) and lead.real > 0

    def test_svd_consistency(self, crystal, pump64):
        tm = propagate(crystal, pump64.with_energy(600e-12))
        sd = schmidt_decompose(tm)
        out = svd_consistency(tm, sd)
        assert out["max_cosh_error"] < 1e-8
        assert out["max_pairing_error"] < 1e-7

    def test_swap_invariance(self, crystal, pump64):
        tm = propagate(crystal, pump64)
        a = schmidt_decompose(tm)
        b = schmidt_decompose(tm.swapped())
        np.testing.assert_allclose(a.r, b.r, atol=1e-10)

    def test_global_phase_invariance(self, grid32):
        tm, _ = synthetic_map(grid32, np.array([1.0, 0.4]))
        ph = np.exp(0.7j)
        rot = TransferMatrices(tm.ss * ph, tm.si * ph, tm.ii / ph, tm.is_ / ph, grid32)
        np.testing.assert_allclose(schmidt_decompose(rot).r, schmidt_decompose(tm).r, atol=1e-12)

    def test_integrity_error(self, grid32):
        tm, _ = synthetic_map(grid32, np.array([1.0]))
        bad = TransferMatrices(tm.ss * 1.01, tm.si, tm.ii, tm.is_, grid32)
        with pytest.raises(IntegrityError):
            schmidt_decompose(bad)
        nan = TransferMatrices(tm.ss * np.nan, tm.si, tm.ii, tm.is_, grid32)
        with pytest.raises(IntegrityError):
            schmidt_decompose(nan)

    @given(st.lists(st.floats(min_value=0.0, max_value=2.5), min_size=1, max_size=5),
           st.integers(min_value=0, max_value=1000))
    def test_round_trip_property(self, r, seed):
        grid = make_grid(LAMBDA_S, LAMBDA_I, 5e13, 16, 2)
        tm, _ = synthetic_map(grid, np.array(r), seed)
        sd = schmidt_decompose(tm)
        np.testing.assert_allclose(sd.r[:len(r)], np.sort(r)[::-1], atol=1e-9)


class TestSweep:
    def test_rows_and_header(self, crystal, pump64):
        rows = sweep_gain(crystal, pump64, energies=[5e-12, 25e-12],
                          models=("full", "chi2", "perturbative"))
        assert len(rows) == 6
        assert SWEEP_HEADER == ("pulse_energy_J", "model", "mean_photons", "schmidt_number")
        assert rows[0].as_tuple()[:2] == (5e-12, "full")
        assert all(np.isfinite(r.mean_photons) for r in rows)

    def test_low_gain_models_agree(self, pump64):
        c = reference_crystal(gamma_xpm_signal=0.0, gamma_xpm_idler=0.0, gamma_spm=0.0)
        rows = sweep_gain(c, pump64, energies=[0.5e-12], models=("full", "chi2", "perturbative"))
        n = [r.mean_photons for r in rows]
        assert max(n) / min(n) - 1 < 0.02

    def test_perturbative_linear(self, crystal, pump64):
        # r scales as sqrt(E), so <n> = sum sinh^2 r is linear in E while r << 1
        rows = sweep_gain(crystal, pump64, energies=[0.01e-12, 0.04e-12], models=("perturbative",))
        assert rows[1].mean_photons / rows[0].mean_photons == pytest.approx(4.0, rel=1e-3)
        assert rows[0].schmidt_number == pytest.approx(rows[1].schmidt_number, rel=0.02)

    def test_high_gain_exceeds_perturbative(self, crystal, pump64):
        rows = sweep_gain(crystal, pump64, energies=[5e-12, 300e-12], models=("chi2", "perturbative"))
        chi2, pert = rows[2].mean_photons, rows[3].mean_photons
        assert chi2 > 1.1 * pert

    def test_validation(self, crystal, pump64):
        with pytest.raises(DomainError):
            sweep_gain(crystal, pump64, energies=[])
        with pytest.raises(DomainError):
            sweep_gain(crystal, pump64, energies=[2e-12, 1e-12])
        with pytest.raises(DomainError):
            sweep_gain(crystal, pump64, energies=[1e-12], models=("quantum",))

    def test_failed_row_recorded(self, pump64):
        c = reference_crystal(gamma_pdc=5e4, gamma_spm=0.0)
        with pytest.warns(RuntimeWarning):
            rows = sweep_gain(c, pump64, energies=[1e-6], models=("chi2",))
        assert np.isnan(rows[0].mean_photons) and "NumericError" in rows[0].error
