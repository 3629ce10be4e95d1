import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from couplersim.device import ModeSpec
from couplersim.errors import OutOfArcRange, UnstableInverse, ValidationError
from couplersim.pulses import (DistortionModel, FastAdiabaticSpec, PulseWaveform,
                               amplitude_to_frequency, apply_distortion, coupler_frequency_to_theta,
                               coupler_waveform, frequency_to_amplitude, predistort, square_waveform,
                               theta_at, theta_to_coupler_frequency)

SPEC = FastAdiabaticSpec(0.1, 0.6, 60.0, 0.5, 70.0, 5.295)


def test_theta_endpoints_and_peak():
    assert theta_at(SPEC, 0.0) == pytest.approx(SPEC.theta_i)
    assert theta_at(SPEC, SPEC.t_p) == pytest.approx(SPEC.theta_i)
    assert theta_at(SPEC, SPEC.t_p / 2) == pytest.approx(SPEC.theta_f)


@given(st.floats(0.01, 1.5))
def test_theta_frequency_roundtrip(theta):
    f = theta_to_coupler_frequency(theta, 70.0, 5.3)
    assert coupler_frequency_to_theta(f, 70.0, 5.3) == pytest.approx(theta, rel=1e-12)


def test_waveform_is_symmetric_and_above_qubit():
    wf = coupler_waveform(SPEC)
    assert wf.duration == pytest.approx(60.0)
    assert np.allclose(wf.samples, wf.samples[::-1])
    assert wf.samples.min() > SPEC.f_q_high


def test_spec_validation():
    with pytest.raises(ValidationError):
        FastAdiabaticSpec(0.6, 0.1)
    with pytest.raises(ValidationError):
        FastAdiabaticSpec(0.1, 0.6, t_p=0.0)
    with pytest.raises(ValidationError):
        FastAdiabaticSpec(0.1, 0.6, t_p=60.0, sample_dt=0.7)


def test_flux_roundtrip_and_range():
    coupler = ModeSpec("C", "coupler", 7.4, -150, squid_asymmetry=0.1)
    wf = PulseWaveform(np.linspace(7.3, 5.6, 40), 0.5, "coupler_frequency")
    amp = frequency_to_amplitude(wf, coupler)
    back = amplitude_to_frequency(amp, coupler)
    assert np.allclose(back.samples, wf.samples, atol=1e-10)
    bad = PulseWaveform(np.array([7.0, 7.5]), 0.5, "coupler_frequency")
    with pytest.raises(OutOfArcRange) as exc:
        frequency_to_amplitude(bad, coupler)
    assert exc.value.index == 1


def test_distortion_step_response_oracle():
    model = DistortionModel(((0.05, 20.0), (-0.02, 200.0)))
    wf = PulseWaveform(np.ones(800), 0.5, "flux_amplitude")
    out = apply_distortion(wf, model).samples
    assert np.allclose(out, model.step_response(800, 0.5), atol=1e-12)


@given(st.floats(-0.5, 0.5), st.floats(1.0, 500.0))
def test_predistort_inverts_distortion(a, tau):
    model = DistortionModel(((a, tau),))
    rng = np.random.default_rng(1)
    wf = PulseWaveform(rng.normal(size=200), 0.5, "flux_amplitude")
    rt = apply_distortion(predistort(wf, model), model)
    assert np.allclose(rt.samples, wf.samples, atol=1e-9)


def test_unstable_inverse():
    # a zero of the line filter outside the unit circle cannot be inverted causally
    with pytest.raises(UnstableInverse):
        predistort(PulseWaveform(np.ones(10), 1.0, "flux_amplitude"),
                   DistortionModel(((-0.9, 0.3),)))


def test_waveform_csv_roundtrip(tmp_path):
    wf = square_waveform(5.1, 10.0, 0.5)
    path = tmp_path / "w.csv"
    wf.save(path)
    back = PulseWaveform.load(path)
    assert np.array_equal(back.samples, wf.samples) and back.dt == wf.dt and back.kind == wf.kind
