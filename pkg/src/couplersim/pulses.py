"""Fast-adiabatic coupler waveforms, flux conversion and pulse distortion."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .device import ModeSpec, flux_for_frequency, mode_frequency_at_flux
from .errors import OutOfArcRange, UnstableInverse, ValidationError

WAVEFORM_KINDS = ("coupler_frequency", "qubit_frequency", "flux_amplitude")
_UNITS = {"coupler_frequency": "GHz", "qubit_frequency": "GHz", "flux_amplitude": "phi0"}


@dataclass(frozen=True)
class FastAdiabaticSpec:
    """Parameters of a unipolar fast-adiabatic coupler pulse.

    Angles in radians, times in ns, ``g_qc`` in MHz, ``f_q_high`` in GHz.
    The angle is defined against the higher-frequency qubit of the pair.
    """

    theta_i: float
    theta_f: float
    t_p: float = 60.0
    sample_dt: float = 0.5
    g_qc: float = 70.0
    f_q_high: float = 5.295

    def __post_init__(self):
        if not 0 < self.theta_i <= self.theta_f < math.pi / 2:
            raise ValidationError("need 0 < theta_i <= theta_f < pi/2")
        if not self.t_p > 0:
            raise ValidationError("t_p must be positive")
        if not self.sample_dt > 0:
            raise ValidationError("sample_dt must be positive")
        n = self.t_p / self.sample_dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValidationError("sample_dt must divide t_p")

    @property
    def n_samples(self) -> int:
        return int(round(self.t_p / self.sample_dt))

    def with_theta_f(self, theta_f) -> "FastAdiabaticSpec":
        return FastAdiabaticSpec(self.theta_i, theta_f, self.t_p, self.sample_dt,
                                 self.g_qc, self.f_q_high)


@dataclass(frozen=True)
class PulseWaveform:
    """Uniformly sampled control trajectory.

    ``samples[k]`` is the value at the centre of interval k, i.e. at
    ``(k + 1/2) * dt``, so ``len(samples) * dt`` is the duration.
    """

    samples: np.ndarray
    dt: float
    kind: str = "coupler_frequency"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if self.kind not in WAVEFORM_KINDS:
            raise ValidationError(f"unknown waveform kind {self.kind!r}")
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if s.ndim != 1 or s.size == 0 or not np.all(np.isfinite(s)):
            raise ValidationError("waveform samples must be a finite 1-D array")

    @property
    def duration(self) -> float:
        return len(self.samples) * self.dt

    @property
    def times(self) -> np.ndarray:
        return (np.arange(len(self.samples)) + 0.5) * self.dt

    def at(self, t):
        """Linear interpolation between sample centres, held at the ends."""
        return np.interp(t, self.times, self.samples)

    def replace_samples(self, samples, kind=None) -> "PulseWaveform":
        return PulseWaveform(samples, self.dt, kind or self.kind, dict(self.meta))

    # -- CSV ------------------------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# kind={self.kind}\n# dt={float(self.dt)!r} ns\n# units={_UNITS[self.kind]}\n")
        buf.write("value\n")
        for v in self.samples:
            buf.write(f"{v:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PulseWaveform":
        kind, dt, values = None, None, []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                if key.strip() == "kind":
                    kind = val.strip()
                elif key.strip() == "dt":
                    dt = float(val.split()[0])
                continue
            if line == "value":
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ValidationError(f"bad sample {line!r}", line=lineno) from None
        if kind is None or dt is None:
            raise ValidationError("waveform header must declare kind and dt")
        return cls(np.array(values), dt, kind)

    def save(self, path):
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path) -> "PulseWaveform":
        return cls.from_csv(Path(path).read_text())


# ---------------------------------------------------------------------------
# theta parametrization
# ---------------------------------------------------------------------------

def theta_at(spec: FastAdiabaticSpec, t):
    """theta(t) = theta_i + (theta_f - theta_i)/2 * (1 - cos(2 pi t / t_p))."""
    t = np.asarray(t, dtype=float)
    return spec.theta_i + 0.5 * (spec.theta_f - spec.theta_i) * (1.0 - np.cos(2 * np.pi * t / spec.t_p))


def theta_trajectory(spec: FastAdiabaticSpec, times=None):
    """(times, theta) on the sample grid of ``spec`` or at given times."""
    if times is None:
        times = (np.arange(spec.n_samples) + 0.5) * spec.sample_dt
    times = np.asarray(times, dtype=float)
    return times, theta_at(spec, times)


def theta_to_coupler_frequency(theta, g_qc: float, f_q: float):
    """Coupler frequency (GHz) for angle theta = arctan(g_qc / (f_c - f_q))."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0) or np.any(theta >= np.pi / 2):
        raise ValidationError("theta must lie in (0, pi/2)")
    f = f_q + g_qc * 1e-3 / np.tan(theta)
    return float(f) if f.ndim == 0 else f


def coupler_frequency_to_theta(f_c, g_qc: float, f_q: float):
    d = np.asarray(f_c, dtype=float) - f_q
    if np.any(d <= 0):
        raise ValidationError("coupler must sit above the qubit")
    th = np.arctan(g_qc * 1e-3 / d)
    return float(th) if th.ndim == 0 else th


def coupler_waveform(spec: FastAdiabaticSpec) -> PulseWaveform:
    _, th = theta_trajectory(spec)
    f = theta_to_coupler_frequency(th, spec.g_qc, spec.f_q_high)
    return PulseWaveform(np.atleast_1d(f), spec.sample_dt, "coupler_frequency",
                         {"theta_i": spec.theta_i, "theta_f": spec.theta_f, "t_p": spec.t_p})


def square_waveform(value: float, duration: float, dt: float,
                    kind: str = "qubit_frequency") -> PulseWaveform:
    n = int(round(duration / dt))
    if n < 1 or abs(n * dt - duration) > 1e-9 * duration:
        raise ValidationError("dt must divide duration")
    return PulseWaveform(np.full(n, float(value)), dt, kind)


# ---------------------------------------------------------------------------
# flux conversion
# ---------------------------------------------------------------------------

def frequency_to_amplitude(waveform: PulseWaveform, spec: ModeSpec) -> PulseWaveform:
    """Flux amplitude (relative to the sweetspot) reproducing a frequency waveform."""
    if waveform.kind == "flux_amplitude":
        raise ValidationError("waveform is already a flux amplitude")
    out = np.empty_like(waveform.samples)
    for k, f in enumerate(waveform.samples):
        try:
            out[k] = flux_for_frequency(spec, f) - spec.flux_offset
        except OutOfArcRange as exc:
            raise OutOfArcRange(str(exc), index=k) from None
    return waveform.replace_samples(out, "flux_amplitude")


def amplitude_to_frequency(waveform: PulseWaveform, spec: ModeSpec,
                           kind: str = "coupler_frequency") -> PulseWaveform:
    if waveform.kind != "flux_amplitude":
        raise ValidationError("expected a flux_amplitude waveform")
    f = mode_frequency_at_flux(spec, waveform.samples + spec.flux_offset)
    return waveform.replace_samples(np.atleast_1d(f), kind)


# ---------------------------------------------------------------------------
# distortion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DistortionModel:
    """Line response with step response ``gain * (1 + sum a_k exp(-t/tau_k))``.

    ``terms`` is a sequence of ``(amplitude, tau_ns)`` pairs.
    """

    terms: tuple = ()
    gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((float(a), float(t)) for a, t in self.terms))
        for a, tau in self.terms:
            if not tau > 0:
                raise ValidationError("time constants must be positive")
            if not abs(a) < 1:
                raise ValidationError("exponential amplitudes must satisfy |a| < 1")
        if self.gain == 0:
            raise ValidationError("gain must be non-zero")

    def coefficients(self, dt: float):
        """(b, a) polynomials in z^-1 of the discrete line filter."""
        den = np.array([1.0])
        for _, tau in self.terms:
            den = np.polymul(den, [1.0, -math.exp(-dt / tau)])
        num = den.copy()
        for k, (amp, _) in enumerate(self.terms):
            part = np.array([amp, -amp])
            for j, (_, tau) in enumerate(self.terms):
                if j != k:
                    part = np.polymul(part, [1.0, -math.exp(-dt / tau)])
            num = np.polyadd(num, part)
        return self.gain * num, den

    def step_response(self, n: int, dt: float) -> np.ndarray:
        t = np.arange(n) * dt
        s = np.ones(n)
        for amp, tau in self.terms:
            s += amp * np.exp(-t / tau)
        return self.gain * s


def apply_distortion(waveform: PulseWaveform, model: DistortionModel) -> PulseWaveform:
    b, a = model.coefficients(waveform.dt)
    return waveform.replace_samples(signal.lfilter(b, a, waveform.samples))


def predistort(waveform: PulseWaveform, model: DistortionModel) -> PulseWaveform:
    """Exact discrete inverse of :func:`apply_distortion`."""
    b, a = model.coefficients(waveform.dt)
    poles = np.roots(b) if len(b) > 1 else np.array([])
    if np.any(np.abs(poles) >= 1.0):
        raise UnstableInverse(
            f"inverse filter has poles outside the unit circle: {np.abs(poles).max():.6f}")
    return waveform.replace_samples(signal.lfilter(a, b, waveform.samples))
