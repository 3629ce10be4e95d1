"""Controlled-Z gate simulation, calibration and channel metrics."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from ..device import DeviceGraph, basis_index
from ..errors import NoBracket, ValidationError
from ..pulses import (FastAdiabaticSpec, PulseWaveform, coupler_frequency_to_theta,
                      coupler_waveform, square_waveform)
from ..spectrum import eigensystem, interaction_profile
from .evolve import DEFAULT_SUBSTEP, evolve

COMP_STATES = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class CZMetrics:
    conditional_phase: float            # degrees, (-180, 180]
    single_qubit_phases: tuple          # degrees, (qubit_a, qubit_b)
    missing_fraction: float
    leakage_L1: float
    gate_error: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def wrap_degrees(x):
    """Map angles to (-180, 180]."""
    y = -((-np.asarray(x, dtype=float) + 180.0) % 360.0 - 180.0)
    return float(y) if np.ndim(y) == 0 else y


@dataclass
class GateFrame:
    """Dressed computational basis of an edge at its idle bias.

    ``basis`` has the dressed eigenvectors as columns, ordered so the first
    four are |00>, |01>, |10>, |11> with (qubit_a, qubit_b) occupations.
    ``frame`` holds the reference energies (GHz) removed after evolution:
    single-qubit frequencies for computational states, dressed energies
    for the rest.
    """

    graph: DeviceGraph
    qubit_a: str
    qubit_b: str
    idle: dict
    basis: np.ndarray
    energies: np.ndarray
    frame: np.ndarray

    @classmethod
    def at_idle(cls, graph: DeviceGraph, edge, idle: dict) -> "GateFrame":
        e = graph.edge(edge)
        w, v = eigensystem(graph, idle)
        order = []
        for a, b in COMP_STATES:
            occ = {e.qubit_a: a, e.qubit_b: b}
            i = basis_index(graph, occ)
            k = int(np.argmax(np.abs(v[i]) ** 2))
            if k in order:
                raise ValidationError("computational states are not resolvable at idle")
            order.append(k)
        rest = [k for k in range(len(w)) if k not in order]
        idx = order + rest
        basis = v[:, idx]
        for j, (a, b) in enumerate(COMP_STATES):
            i = basis_index(graph, {e.qubit_a: a, e.qubit_b: b})
            if basis[i, j] < 0:
                basis[:, j] *= -1
        energies = w[idx]
        frame = energies.copy()
        e00, e01, e10 = energies[0], energies[1], energies[2]
        frame[3] = e00 + (e01 - e00) + (e10 - e00)
        return cls(graph, e.qubit_a, e.qubit_b, dict(idle), basis, energies, frame)

    def rotate(self, duration):
        return np.exp(2j * np.pi * self.frame * duration)

    def to_frame_unitary(self, u, duration):
        ud = self.basis.conj().T @ u @ self.basis
        return self.rotate(duration)[:, None] * ud

    def to_frame_states(self, rho, duration):
        r = self.rotate(duration)
        out = self.basis.conj().T @ rho @ self.basis
        return r[:, None] * out * r.conj()[None, :]

    def lab_operator(self, i, j):
        return np.outer(self.basis[:, i], self.basis[:, j].conj())


@dataclass
class GateChannel:
    """Images of the computational operators |i><j| (dressed, rotating frame).

    ``outputs[i, j]`` is a (dim, dim) matrix whose leading 4x4 block is
    the computational subspace.
    """

    outputs: np.ndarray

    @classmethod
    def from_unitary(cls, u):
        d = u.shape[0]
        cols = u[:, :4]
        out = np.einsum("ai,bj->ijab", cols, cols.conj())
        return cls(out)

    @property
    def dim(self):
        return self.outputs.shape[-1]

    def trace_deviation(self) -> float:
        tr = np.trace(self.outputs, axis1=-2, axis2=-1)
        return float(np.max(np.abs(tr - np.eye(4))))

    def relative_phases(self):
        """Phases (rad) of |i> relative to |00>, from coherences."""
        return np.array([np.angle(self.outputs[i, 0][i, 0]) for i in range(4)])


def cz_target(phases=None):
    """Diagonal of CZ with optional single-qubit Z corrections (rad)."""
    pa, pb = (0.0, 0.0) if phases is None else phases
    return np.array([1.0, np.exp(1j * pb), np.exp(1j * pa), -np.exp(1j * (pa + pb))])


def gate_error_and_leakage(channel: GateChannel, target=None, correct_phases: bool = True):
    """Average gate error and leakage of a channel on the computational block.

    Single-qubit Z phases are absorbed into the target unless
    ``correct_phases`` is false.  Returns ``{"gate_error", "L1", "F_avg",
    "F_pro"}``; error uses F_avg = (d F_pro + 1 - L1)/(d + 1).
    """
    d = 4
    out = channel.outputs
    if target is None:
        if correct_phases:
            ph = channel.relative_phases()
            target = cz_target((ph[2], ph[1]))
        else:
            target = cz_target()
    target = np.asarray(target)
    if target.ndim == 2:
        target = np.diag(target)
    block = np.array([[out[i, j][i, j] for j in range(d)] for i in range(d)])
    f_pro = float(np.real(np.sum(target.conj()[:, None] * block * target[None, :]))) / d ** 2
    kept = np.array([np.real(np.trace(out[i, i][:d, :d])) for i in range(d)])
    l1 = float(max(0.0, 1.0 - kept.mean()))
    f_avg = (d * f_pro + 1.0 - l1) / (d + 1)
    return {"gate_error": 1.0 - f_avg, "L1": l1, "F_avg": f_avg, "F_pro": f_pro}


def _branch(channel: GateChannel, control: int, target_is_a: bool):
    """Target-qubit coherence after the gate for control in |control>, target in |+>."""
    def idx(c, t):
        a, b = (t, c) if target_is_a else (c, t)
        return COMP_STATES.index((a, b))

    i0, i1 = idx(control, 0), idx(control, 1)
    coeff = {i0: 1 / math.sqrt(2), i1: 1 / math.sqrt(2)}
    rho = sum(coeff[i] * coeff[j] * channel.outputs[i, j] for i in coeff for j in coeff)
    coh = 0.0 + 0.0j
    for c in (0, 1):
        coh += rho[idx(c, 0), idx(c, 1)]
    return 2 * abs(coh), -np.angle(coh)


def conditional_oscillation_metrics(channel: GateChannel, target: str = "a") -> CZMetrics:
    """Two-branch conditional-oscillation readout of a gate channel.

    The conditional phase is the target phase with the control in |1>
    minus that with the control in |0>; the missing fraction is one minus
    the ratio of the two oscillation amplitudes.
    """
    ta = target == "a"
    amp0, ph0 = _branch(channel, 0, ta)
    amp1, ph1 = _branch(channel, 1, ta)
    cphase = wrap_degrees(np.degrees(ph1 - ph0))
    _, pa = _branch(channel, 0, True)
    _, pb = _branch(channel, 0, False)
    mf = float(np.clip(1.0 - amp1 / amp0, 0.0, 1.0)) if amp0 > 0 else 1.0
    m = gate_error_and_leakage(channel)
    return CZMetrics(cphase, (wrap_degrees(np.degrees(pa)), wrap_degrees(np.degrees(pb))),
                     mf, m["L1"], m["gate_error"])


# ---------------------------------------------------------------------------
# running the gate
# ---------------------------------------------------------------------------

@dataclass
class CZSetup:
    """Everything needed to simulate one edge's CZ pulse."""

    graph: DeviceGraph            # edge subgraph
    edge: object
    idle: dict                    # GHz, coupler at its idle bias
    frame: GateFrame = field(repr=False)

    @classmethod
    def create(cls, graph: DeviceGraph, edge, coupler_idle: float | None = None,
               truncation: int | None = None, window=None):
        e = graph.edge(edge)
        g = graph.edge_subgraph(e)
        if truncation is not None:
            g = g.with_truncation(truncation)
        if coupler_idle is None:
            coupler_idle = j1_null_bias(graph, e, window)
        idle = g.sweetspots()
        idle[e.coupler] = coupler_idle
        return cls(g, e, idle, GateFrame.at_idle(g, e, idle))

    @property
    def high_qubit(self) -> str:
        e = self.edge
        return e.qubit_a if self.idle[e.qubit_a] >= self.idle[e.qubit_b] else e.qubit_b

    @property
    def low_qubit(self) -> str:
        e = self.edge
        return e.qubit_b if self.high_qubit == e.qubit_a else e.qubit_a

    @property
    def g_qc_high(self) -> float:
        e = self.edge
        return e.g_qc_a if self.high_qubit == e.qubit_a else e.g_qc_b

    @property
    def theta_i(self) -> float:
        return coupler_frequency_to_theta(self.idle[self.edge.coupler], self.g_qc_high,
                                          self.idle[self.high_qubit])

    def spec(self, theta_f: float, t_p: float = 60.0, sample_dt: float = 0.5) -> FastAdiabaticSpec:
        return FastAdiabaticSpec(self.theta_i, theta_f, t_p, sample_dt, self.g_qc_high,
                                 self.idle[self.high_qubit])

    def waveforms(self, spec: FastAdiabaticSpec, low_detuning_mhz: float = 0.0) -> dict:
        wfs = {self.edge.coupler: coupler_waveform(spec)}
        if low_detuning_mhz:
            f_low = self.idle[self.low_qubit] - abs(low_detuning_mhz) * 1e-3
            wfs[self.low_qubit] = square_waveform(f_low, spec.t_p, spec.sample_dt)
        return wfs

    def channel(self, waveforms, noise=None, substep=DEFAULT_SUBSTEP) -> GateChannel:
        duration = next(iter(waveforms.values())).duration
        if not noise:
            res = evolve(self.graph, waveforms, self.idle, substep=substep)
            return GateChannel.from_unitary(self.frame.to_frame_unitary(res.unitary, duration))
        fr = self.frame
        inputs = np.array([fr.lab_operator(i, j) for i in range(4) for j in range(4)])
        table = dict(self.graph.noise) if noise is True else dict(noise)
        res = evolve(self.graph, waveforms, self.idle, initial=inputs, noise=table, substep=substep)
        out = np.array([fr.to_frame_states(r, duration) for r in res.states])
        return GateChannel(out.reshape(4, 4, *out.shape[1:]))


def j1_null_bias(graph: DeviceGraph, edge, window=None, n_points: int = 27) -> float:
    """Coupler frequency where J1 vanishes (the default idle bias)."""
    e = graph.edge(edge)
    spec = graph.mode(e.coupler)
    if window is None:
        window = (spec.f_sweetspot - 0.55, spec.f_sweetspot)
    prof = interaction_profile(graph, e, window, n_points)
    null = prof.nulls["j1"]
    if not null.valid:
        raise NoBracket(f"J1 has no null for {e.name} in {window} GHz")
    return null.frequency


def conditional_oscillation(setup: CZSetup, waveforms, noise=None,
                            substep=DEFAULT_SUBSTEP, target: str | None = None) -> CZMetrics:
    """Conditional phase, missing fraction and leakage of a CZ pulse."""
    ch = setup.channel(waveforms, noise, substep)
    if target is None:
        target = "a" if setup.low_qubit == setup.edge.qubit_a else "b"
    return conditional_oscillation_metrics(ch, target)


def conditional_phase(setup: CZSetup, theta_f: float, t_p: float = 60.0,
                      low_detuning_mhz: float = 0.0, substep=DEFAULT_SUBSTEP) -> float:
    ch = setup.channel(setup.waveforms(setup.spec(theta_f, t_p), low_detuning_mhz), None, substep)
    ph = ch.relative_phases()
    return wrap_degrees(np.degrees(ph[3] - ph[2] - ph[1] + ph[0]))


@dataclass
class Calibration:
    spec: FastAdiabaticSpec
    metrics: CZMetrics
    low_detuning_mhz: float
    coupler_idle: float
    scan_theta: np.ndarray
    scan_phase: np.ndarray

    def summary(self) -> dict:
        return {
            "theta_i": self.spec.theta_i, "theta_f": self.spec.theta_f,
            "t_p_ns": self.spec.t_p, "sample_dt_ns": self.spec.sample_dt,
            "g_qc_MHz": self.spec.g_qc, "f_q_high_GHz": self.spec.f_q_high,
            "coupler_idle_GHz": self.coupler_idle,
            "low_qubit_detuning_MHz": self.low_detuning_mhz,
            "metrics": asdict(self.metrics),
        }


def calibrate_cz(setup: CZSetup, t_p: float = 60.0, search_box=(None, 1.2),
                 low_detuning_mhz: float = 0.0, n_scan: int = 16,
                 substep=DEFAULT_SUBSTEP, sample_dt: float = 0.5) -> Calibration:
    """Solve conditional_phase(theta_f) = 180 deg inside ``search_box``.

    A coarse scan of the accumulated (unwrapped) conditional phase brackets
    the first 180 deg crossing; a bracketed secant (Brent) solve refines it.
    """
    if not t_p > 0:
        raise ValidationError("t_p must be positive")
    lo, hi = search_box
    lo = setup.theta_i * 1.0001 if lo is None else lo
    if not setup.theta_i <= lo < hi < math.pi / 2:
        raise ValidationError("search box must satisfy theta_i <= lo < hi < pi/2")

    def phase(th):
        ch = setup.channel(setup.waveforms(setup.spec(th, t_p, sample_dt), low_detuning_mhz),
                           None, substep)
        ph = ch.relative_phases()
        return np.degrees(ph[3] - ph[2] - ph[1] + ph[0])

    thetas = np.linspace(lo, hi, n_scan)
    raw = np.array([phase(t) for t in thetas])
    acc = np.degrees(np.unwrap(np.radians(raw)))
    # accumulated phase measured from the unpulsed value
    ref = wrap_degrees(acc[0])
    acc = acc - (acc[0] - ref)
    sign = 1.0 if acc[np.argmax(np.abs(acc))] >= 0 else -1.0
    mag = sign * acc
    above = np.flatnonzero(mag >= 180.0)
    if above.size == 0 or above[0] == 0:
        raise NoBracket(
            f"conditional phase does not cross 180 deg for theta_f in [{lo:.4f}, {hi:.4f}] "
            f"(reached {mag.max():.1f} deg); widen the search box or lengthen t_p")
    k = above[0]

    def residual(th):
        return wrap_degrees(sign * phase(th) - 180.0)

    a, b = thetas[k - 1], thetas[k]
    ra, rb = residual(a), residual(b)
    if np.sign(ra) == np.sign(rb):
        raise NoBracket("conditional phase is not monotone across the bracket")
    theta_f = optimize.brentq(residual, a, b, xtol=1e-9, rtol=1e-12)
    spec = setup.spec(theta_f, t_p, sample_dt)
    metrics = conditional_oscillation(setup, setup.waveforms(spec, low_detuning_mhz), None, substep)
    return Calibration(spec, metrics, low_detuning_mhz, setup.idle[setup.edge.coupler],
                       thetas, wrap_degrees(raw))


@dataclass
class CZLandscape:
    theta_f: np.ndarray
    low_detuning_mhz: np.ndarray
    conditional_phase: np.ndarray     # deg, (n_theta, n_detuning)
    missing_fraction: np.ndarray
    t_p: float

    def to_csv(self) -> str:
        lines = ["theta_f_rad,low_detuning_mhz,conditional_phase_deg,missing_fraction"]
        for i, th in enumerate(self.theta_f):
            for j, d in enumerate(self.low_detuning_mhz):
                lines.append(f"{th:.17g},{d:.17g},{self.conditional_phase[i, j]:.17g},"
                             f"{self.missing_fraction[i, j]:.17g}")
        return "\n".join(lines) + "\n"


def cz_landscape(setup: CZSetup, theta_grid, detuning_grid, t_p: float = 60.0,
                 substep=DEFAULT_SUBSTEP, executor=None) -> CZLandscape:
    """Conditional phase and missing fraction over (theta_f, low-qubit detuning)."""
    if not t_p > 0:
        raise ValidationError("t_p must be positive")
    theta_grid = np.asarray(theta_grid, dtype=float)
    detuning_grid = np.asarray(detuning_grid, dtype=float)
    if np.any(theta_grid <= 0) or np.any(theta_grid >= math.pi / 2):
        raise ValidationError("theta_f must lie in (0, pi/2)")
    points = [(th, d) for th in theta_grid for d in detuning_grid]

    def run(p):
        m = conditional_oscillation(setup, setup.waveforms(setup.spec(p[0], t_p), p[1]),
                                    None, substep)
        return m.conditional_phase, m.missing_fraction

    mapper = map if executor is None else executor.map
    out = np.array(list(mapper(run, points))).reshape(len(theta_grid), len(detuning_grid), 2)
    return CZLandscape(theta_grid, detuning_grid, out[..., 0], out[..., 1], t_p)
