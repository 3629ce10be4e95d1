import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from couplersim.dynamics.cz import (CZSetup, GateChannel, calibrate_cz, conditional_oscillation,
                                    conditional_oscillation_metrics, cz_landscape, cz_target,
                                    gate_error_and_leakage, wrap_degrees)
from couplersim.errors import NoBracket, ValidationError


@pytest.fixture(scope="module")
def setup(device):
    return CZSetup.create(device, "Q2-Q0")


@pytest.fixture(scope="module")
def calibration(setup):
    return calibrate_cz(setup, 60.0)


def _diag_unitary(phases, dim=6):
    u = np.eye(dim, dtype=complex)
    u[:4, :4] = np.diag(phases)
    return u


def test_ideal_cz_has_no_error():
    m = gate_error_and_leakage(GateChannel.from_unitary(_diag_unitary(cz_target())))
    assert m["gate_error"] < 1e-10 and m["L1"] < 1e-10


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_single_qubit_phases_are_corrected(pa, pb):
    ch = GateChannel.from_unitary(_diag_unitary(cz_target((pa, pb))))
    assert gate_error_and_leakage(ch)["gate_error"] < 1e-10
    assert abs(conditional_oscillation_metrics(ch).conditional_phase) == pytest.approx(180.0)


def test_identity_error_oracle():
    """Identity against a CZ target: F_pro = |tr(U^dag V)/4|^2 = 1/4, so error = 1 - (4/4 + 1)/5."""
    ch = GateChannel.from_unitary(np.eye(6, dtype=complex))
    m = gate_error_and_leakage(ch, target=cz_target())
    assert m["F_pro"] == pytest.approx(0.25)
    assert m["gate_error"] == pytest.approx(1 - (4 * 0.25 + 1) / 5)


def test_leakage_oracle():
    """Moving |11> halfway into a non-computational level gives L1 = (1/2)/4."""
    u = np.eye(6, dtype=complex)
    c = s = 1 / math.sqrt(2)
    u[3, 3], u[3, 4], u[4, 3], u[4, 4] = -c, s, s, c
    assert gate_error_and_leakage(GateChannel.from_unitary(u))["L1"] == pytest.approx(0.125)


@given(st.floats(-1000, 1000))
def test_wrap_degrees_range(x):
    y = wrap_degrees(x)
    assert -180 < y <= 180
    assert math.isclose(math.cos(math.radians(x)), math.cos(math.radians(y)), abs_tol=1e-9)


def test_calibrated_coherent_gate(calibration):
    m = calibration.metrics
    assert abs(abs(m.conditional_phase) - 180.0) < 0.1
    assert m.gate_error < 2e-3
    assert m.leakage_L1 < 1e-3


def test_conditional_phase_symmetric(setup, calibration):
    wf = setup.waveforms(calibration.spec)
    a = conditional_oscillation(setup, wf, target="a").conditional_phase
    b = conditional_oscillation(setup, wf, target="b").conditional_phase
    assert wrap_degrees(a - b) == pytest.approx(0.0, abs=1e-6)


def test_validation_and_bracket(setup):
    with pytest.raises(ValidationError):
        calibrate_cz(setup, 0.0)
    with pytest.raises(NoBracket):
        calibrate_cz(setup, 60.0, search_box=(None, setup.theta_i + 0.02), n_scan=4)


def test_landscape_has_180_contour(setup):
    land = cz_landscape(setup, np.linspace(0.45, 0.75, 7), [0.0, 30.0])
    for j in range(2):
        col = np.degrees(np.unwrap(np.radians(land.conditional_phase[:, j])))
        # accumulated phase passes through +-180 somewhere along theta_f
        assert np.any(np.diff(np.sign(np.abs(col) - 180.0)) != 0)
    assert land.to_csv().count("\n") == 15
