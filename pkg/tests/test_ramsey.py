import numpy as np
import pytest

from couplersim.dynamics.ramsey import ramsey_with_cz
from couplersim.errors import ValidationError


def test_no_gates_is_bare_ramsey(device):
    tr = ramsey_with_cz(device, "Q2-Q0", 0, 100.0)
    t2 = device.noise_for("Q2").T2_ramsey
    assert tr.amplitude == pytest.approx(1.0)
    assert np.allclose(tr.envelope, np.exp(-tr.delays * 1e-3 / t2))


def test_contrast_falls_with_excursion(device):
    amps = [ramsey_with_cz(device, "Q2-Q0", 10, d).amplitude for d in (0, 20, 50, 100, 200)]
    assert all(a > b for a, b in zip(amps, amps[1:]))


def test_phase_oracle(device):
    # 10 gates of 60 ns at 1 MHz detuning: 360 * 1e-3 * 600 = 216 deg -> -144 deg wrapped
    assert ramsey_with_cz(device, "Q2-Q0", 10, 1.0).phase == pytest.approx(-144.0)


def test_validation(device):
    with pytest.raises(ValidationError):
        ramsey_with_cz(device, "Q2-Q0", -1, 10.0)
