"""Shared fixtures: small grids and the reference crystal couplings."""

import numpy as np
import pytest
from hypothesis import settings

from twinbeam.grid import bandwidth_wavelength_to_angular, make_grid
from twinbeam.propagator import CrystalSpec
from twinbeam.pump import gaussian_pump

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")

LAMBDA_S = 1563e-9
LAMBDA_I = 1569e-9
LAMBDA_P = 783e-9
PUMP_FWHM = bandwidth_wavelength_to_angular(1.9e-9, LAMBDA_P)
BASE_SPAN = 6.8e12


def reference_crystal(n_sections=20, **changes):
    crystal = CrystalSpec(
        length=8e-3, dbeta_signal=1.70e-10, dbeta_idler=-1.02e-10, gamma_pdc=28.0,
        gamma_xpm_signal=0.16, gamma_xpm_idler=0.059, gamma_spm=0.56, n_sections=n_sections)
    return crystal.replace(**changes) if changes else crystal


@pytest.fixture
def grid64():
    return make_grid(LAMBDA_S, LAMBDA_I, 8 * BASE_SPAN, 64, 2)


@pytest.fixture
def grid32():
    return make_grid(LAMBDA_S, LAMBDA_I, 8 * BASE_SPAN, 32, 2)


@pytest.fixture
def crystal():
    return reference_crystal()


@pytest.fixture
def pump64(grid64):
    return gaussian_pump(grid64, 125e-12, PUMP_FWHM)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def record(tag, ok, detail):
    """Store one acceptance verdict line for the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
