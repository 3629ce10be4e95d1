"""Measurement-induced exchange: a Stark-swept two-level model.

Readout photons pull the measured qubit down in frequency by 2 chi n(t).
When the sweep crosses the resonance with a spectator state the exchange
coupling J1 (or J2) can move population.  The cavity is not a dynamical
mode here; n(t) follows the ring-up/ring-down of a square drive.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from ..device import TWO_PI, DeviceGraph
from ..errors import NoCrossingInWindow, ValidationError
from ..spectrum import _occ, _resolve_edge, dressed_labeling, min_splitting

MANIFOLDS = ("one_excitation", "two_excitation")


@dataclass(frozen=True)
class ReadoutModel:
    """Parametric readout drive.

    ``chi`` and ``kappa`` are in MHz (divided by 2 pi), times in ns.
    ``n_max`` is the steady-state photon number at amplitude 1; the
    photon number scales with amplitude squared.
    """

    chi: float = -1.0
    kappa: float = 2.0
    duration: float = 452.0
    ring_down: float = 300.0
    n_max: float = 60.0
    dephasing_scale: float = 1.0
    dt: float = 0.5

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValidationError("kappa must be positive")
        if self.duration <= 0 or self.ring_down < 0 or self.dt <= 0:
            raise ValidationError("readout times must be positive")
        if self.n_max < 0 or self.dephasing_scale < 0:
            raise ValidationError("n_max and dephasing_scale must be non-negative")

    @property
    def total(self) -> float:
        return self.duration + self.ring_down

    def photons(self, t, amp):
        """n(t) for a square drive of the given amplitude."""
        t = np.asarray(t, dtype=float)
        k = TWO_PI * self.kappa * 1e-3
        n_ss = self.n_max * np.asarray(amp, dtype=float) ** 2
        up = (1.0 - np.exp(-k * np.minimum(t, self.duration) / 2)) ** 2
        down = np.exp(-k * np.clip(t - self.duration, 0.0, None))
        return np.multiply.outer(n_ss, up * down)

    def stark_shift(self, t, amp):
        """Frequency shift of the measured qubit in GHz."""
        return 2.0 * self.chi * 1e-3 * self.photons(t, amp)

    def dephasing_rate(self, t, amp):
        """Measurement-induced dephasing in 1/ns (steady-state dispersive form)."""
        chi = TWO_PI * self.chi * 1e-3
        k = TWO_PI * self.kappa * 1e-3
        rate = 2.0 * chi ** 2 * k / (k ** 2 / 4 + chi ** 2)
        return self.dephasing_scale * rate * self.photons(t, amp)


@dataclass
class ChevronMap:
    coupler_freqs: np.ndarray      # GHz
    amplitudes: np.ndarray
    transfer: np.ndarray           # (n_coupler, n_amp)
    coupling: np.ndarray           # MHz, signed exchange at each coupler frequency
    detuning: np.ndarray           # GHz, E_A - E_B at idle
    manifold: str
    meta: dict = field(default_factory=dict)

    def column(self, f_c):
        k = int(np.argmin(np.abs(self.coupler_freqs - f_c)))
        return self.transfer[k]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("coupler_freq_ghz,amplitude,transfer,coupling_mhz\n")
        for i, f in enumerate(self.coupler_freqs):
            for j, a in enumerate(self.amplitudes):
                buf.write(f"{f:.17g},{a:.17g},{self.transfer[i, j]:.17g},{self.coupling[i]:.17g}\n")
        return buf.getvalue()


def _states(graph: DeviceGraph, measured: str, spectator: str, manifold: str, freqs):
    """Bare states A, B, the mode swept to trace their anticrossing, and its centre.

    Sweeps follow the interaction-profile convention so that the chevron's
    suppression stripe lines up with the profile nulls.
    """
    if manifold == "one_excitation":
        a = _occ(graph, **{measured: 1})
        b = _occ(graph, **{spectator: 1})
        sweep = measured if freqs[measured] >= freqs[spectator] else spectator
        other = spectator if sweep == measured else measured
        return a, b, sweep, float(freqs[other])
    a = _occ(graph, **{measured: 1, spectator: 1})
    b = _occ(graph, **{spectator: 2})
    # f_m + f_s = 2 f_s + alpha_s
    return a, b, measured, float(freqs[spectator]) + graph.mode(spectator).alpha


def two_level_transfer(detuning, coupling, model: ReadoutModel, amplitudes):
    """Transfer out of the measured-excited state for each amplitude.

    ``detuning`` is E_A - E_B (GHz) without drive, ``coupling`` is J (MHz).
    The Bloch vector starts on the idle eigenstate closest to A and is
    propagated with an exact rotation per step followed by dephasing of
    the transverse components.  Transfer is read out in the same idle
    eigenbasis, so a static admixture of B does not count as exchange.
    """
    amps = np.atleast_1d(np.asarray(amplitudes, dtype=float))
    n = max(1, int(np.ceil(model.total / model.dt - 1e-9)))
    h = model.total / n
    mids = (np.arange(n) + 0.5) * h
    delta = TWO_PI * (detuning + model.stark_shift(mids, amps))       # (n_amp, n)
    gamma = model.dephasing_rate(mids, amps)
    omega_x = 2.0 * TWO_PI * coupling * 1e-3
    d0 = TWO_PI * detuning
    axis0 = np.array([omega_x, 0.0, d0]) / max(np.hypot(omega_x, d0), 1e-300)
    if axis0[2] < 0:
        axis0 = -axis0
    r = np.repeat(axis0[:, None], amps.size, axis=1)
    for k in range(n):
        d = delta[:, k]
        norm = np.hypot(omega_x, d)
        safe = np.where(norm > 0, norm, 1.0)
        ax, az = omega_x / safe, d / safe
        ang = norm * h
        c, s = np.cos(ang), np.sin(ang)
        # Rodrigues rotation about (ax, 0, az)
        dot = ax * r[0] + az * r[2]
        cross = np.array([-az * r[1], az * r[0] - ax * r[2], ax * r[1]])
        r = r * c + cross * s + np.array([ax, np.zeros_like(ax), az]) * dot * (1 - c)
        damp = np.exp(-gamma[:, k] * h)
        r[0] *= damp
        r[1] *= damp
    return np.clip((1.0 - axis0 @ r) / 2.0, 0.0, 1.0)


def readout_stark_chevron(graph: DeviceGraph, edge, coupler_freqs, amplitudes,
                          model: ReadoutModel | None = None, manifold: str = "one_excitation",
                          measured: str | None = None, executor=None) -> ChevronMap:
    """Transfer probability over (coupler frequency, readout amplitude).

    The measured qubit defaults to ``qubit_b`` of the edge; the other qubit
    is the spectator.  Couplings come from the anticrossing of the two
    states at each coupler frequency, detunings from the dressed spectrum
    at idle.
    """
    if manifold not in MANIFOLDS:
        raise ValidationError(f"manifold must be one of {MANIFOLDS}")
    model = model or ReadoutModel()
    e = _resolve_edge(graph, edge)
    sub = graph.edge_subgraph(e)
    measured = measured or e.qubit_b
    if measured not in (e.qubit_a, e.qubit_b):
        raise ValidationError(f"{measured} is not a qubit of edge {e.name}")
    spectator = e.qubit_a if measured == e.qubit_b else e.qubit_b
    coupler_freqs = np.asarray(coupler_freqs, dtype=float)
    amplitudes = np.asarray(amplitudes, dtype=float)
    base = sub.sweetspots()

    def point(fc):
        fr = dict(base)
        fr[e.coupler] = float(fc)
        a, b, sweep, center = _states(sub, measured, spectator, manifold, fr)
        lab = dressed_labeling(sub, fr, [a, b])
        det = lab.energy(a) - lab.energy(b)
        for hw in (0.05, 0.15):
            try:
                split = min_splitting(sub, fr, a, b, sweep, (center - hw, center + hw))
                break
            except NoCrossingInWindow:
                continue
        else:
            raise NoCrossingInWindow(f"no anticrossing near {center:.4f} GHz for {sweep}")
        return det, split.coupling

    mapper = map if executor is None else executor.map
    pts = list(mapper(point, coupler_freqs))
    det = np.array([p[0] for p in pts])
    cpl = np.array([p[1] for p in pts])
    transfer = np.array([two_level_transfer(d, j, model, amplitudes) for d, j in zip(det, cpl)])
    return ChevronMap(coupler_freqs, amplitudes, transfer, cpl, det, manifold,
                      {"edge": e.name, "measured": measured, "spectator": spectator})
