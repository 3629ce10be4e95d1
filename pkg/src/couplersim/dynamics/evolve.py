"""Piecewise-constant time evolution of the device under control waveforms."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.linalg import expm

from ..device import (TWO_PI, DeviceGraph, NoiseSpec, diagonal_energies,
                      mode_frequency_at_flux, operators)
from ..errors import NonConvergedStep, ValidationError
from ..pulses import PulseWaveform

DEFAULT_SUBSTEP = 0.1  # ns


@dataclass
class EvolutionResult:
    """Outcome of :func:`evolve`.

    Coherent runs carry the full propagator ``unitary``; open runs carry
    ``states``, the evolved images of the supplied initial operators.
    """

    unitary: np.ndarray | None
    states: np.ndarray | None
    duration: float
    substep: float
    n_steps: int
    open_system: bool

    def unitarity_deviation(self) -> float:
        u = self.unitary
        return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0]), ord=2))

    def trace_deviation(self) -> float:
        tr = np.trace(self.states, axis1=-2, axis2=-1)
        return float(np.max(np.abs(tr - self._input_traces)))


def _timeline(waveforms: Mapping[str, PulseWaveform]):
    if not waveforms:
        raise ValidationError("at least one waveform is required to set the duration")
    wf = list(waveforms.values())
    dt, dur = wf[0].dt, wf[0].duration
    for w in wf[1:]:
        if abs(w.dt - dt) > 1e-12 or abs(w.duration - dur) > 1e-9:
            raise ValidationError("waveforms must share dt and duration")
    return dur


def _frequency_series(graph: DeviceGraph, waveforms, base, times):
    """(n_modes, n_times) array of mode frequencies in GHz."""
    f = np.empty((len(graph.modes), len(times)))
    for k, m in enumerate(graph.modes):
        w = waveforms.get(m.label)
        if w is None:
            try:
                f[k] = float(base[m.label])
            except KeyError:
                raise ValidationError(f"no frequency for mode {m.label}") from None
        elif w.kind == "flux_amplitude":
            f[k] = mode_frequency_at_flux(m, w.at(times) + m.flux_offset)
        else:
            f[k] = w.at(times)
    return f


def collapse_operators(graph: DeviceGraph, noise: Mapping[str, NoiseSpec]):
    """Relaxation and pure-dephasing jump operators (rates in 1/ns)."""
    ops = operators(graph)
    out = []
    for k, m in enumerate(graph.modes):
        spec = noise.get(m.label)
        if spec is None:
            continue
        a = _lowering(graph, k)
        out.append(np.sqrt(1e-3 / spec.T1) * a)
        gphi = spec.gamma_phi * 1e-3
        if gphi > 0:
            out.append(np.sqrt(2.0 * gphi) * np.diag(ops.number[k]))
    return out


def _lowering(graph, k):
    dims = [m.n_levels for m in graph.modes]
    mats = [np.eye(d) for d in dims]
    n = dims[k]
    mats[k] = np.diag(np.sqrt(np.arange(1, n)), 1)
    out = mats[0]
    for op in mats[1:]:
        out = np.kron(out, op)
    return out


def dissipator_superoperator(c_ops, dim):
    """Liouvillian of the dissipator acting on row-major vec(rho)."""
    eye = np.eye(dim)
    sup = np.zeros((dim * dim, dim * dim), dtype=complex)
    for c in c_ops:
        cdc = c.conj().T @ c
        sup += np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
    return sup


def _run(graph, waveforms, base, duration, substep, initial, dissipator):
    n = max(1, int(np.ceil(duration / substep - 1e-9)))
    h = duration / n
    mids = (np.arange(n) + 0.5) * h
    freqs = _frequency_series(graph, waveforms, base, mids)
    ops = operators(graph)
    alpha = np.array([m.alpha for m in graph.modes])
    kerr = alpha @ ops.kerr
    diag = TWO_PI * (freqs.T @ ops.number + kerr)     # (n, dim)
    coupling = ops.coupling
    dim = ops.dim

    def step(k):
        hmat = coupling.copy()
        hmat[np.diag_indices(dim)] += diag[k]
        w, v = np.linalg.eigh(hmat)
        return (v * np.exp(-1j * w * h)) @ v.conj().T

    if dissipator is None:
        u = np.eye(dim, dtype=complex)
        for k in range(n):
            u = step(k) @ u
        return u, None, h, n

    rho = np.array(initial, dtype=complex)
    half = expm(dissipator * (h / 2))
    full = half @ half
    m = rho.shape[0]

    def dissipate(r, prop):
        vec = r.reshape(m, dim * dim).T
        return (prop @ vec).T.reshape(m, dim, dim)

    rho = dissipate(rho, half)
    for k in range(n):
        uk = step(k)
        rho = uk @ rho @ uk.conj().T
        rho = dissipate(rho, full if k < n - 1 else half)
    return None, rho, h, n


def evolve(graph: DeviceGraph, waveforms: Mapping[str, PulseWaveform],
           frequencies: Mapping[str, float] | None = None, initial=None,
           noise: Mapping[str, NoiseSpec] | bool | None = None,
           substep: float = DEFAULT_SUBSTEP, adaptive: bool = False,
           tolerance: float = 1e-6, max_refinements: int = 4) -> EvolutionResult:
    """Propagate the device through the given control waveforms.

    Modes without a waveform sit at ``frequencies`` (default: sweetspots).
    Waveforms are linearly interpolated and the Hamiltonian is held
    constant over each substep.  With ``noise`` the evolution follows a
    Lindblad equation (Strang splitting of coherent and dissipative parts)
    and ``initial`` must be a density matrix or a stack of them.  With
    ``adaptive`` the substep is halved until the final state changes by
    less than ``tolerance`` in fidelity.
    """
    duration = _timeline(waveforms)
    base = graph.sweetspots() if frequencies is None else dict(frequencies)
    dim = operators(graph).dim
    dissipator = None
    if noise:
        table = dict(graph.noise) if noise is True else dict(noise)
        c_ops = collapse_operators(graph, table)
        dissipator = dissipator_superoperator(c_ops, dim) if c_ops else np.zeros((dim * dim,) * 2)
        if initial is None:
            raise ValidationError("open-system evolution needs initial density matrices")
        initial = np.asarray(initial, dtype=complex)
        single = initial.ndim == 2
        if single:
            initial = initial[None]
        if initial.shape[1:] != (dim, dim):
            raise ValidationError(f"initial state must be {dim}x{dim}")

    def once(s):
        return _run(graph, waveforms, base, duration, s, initial, dissipator)

    u, rho, h, n = once(substep)
    if adaptive:
        for _ in range(max_refinements):
            u2, rho2, h2, n2 = once(h / 2)
            change = _change(u, u2) if dissipator is None else _change_states(rho, rho2)
            u, rho, h, n = u2, rho2, h2, n2
            if change < tolerance:
                break
        else:
            raise NonConvergedStep(f"no convergence to {tolerance} after {max_refinements} refinements")

    if dissipator is None:
        if initial is not None:
            initial = np.asarray(initial, dtype=complex)
            states = u @ initial if initial.ndim == 1 else u @ initial @ u.conj().T
        else:
            states = None
        res = EvolutionResult(u, states, duration, h, n, False)
    else:
        res = EvolutionResult(None, rho[0] if single else rho, duration, h, n, True)
        res._input_traces = np.trace(initial, axis1=-2, axis2=-1)[0 if single else slice(None)]
    return res


def _change(u1, u2):
    d = u1.shape[0]
    return 1.0 - abs(np.trace(u1.conj().T @ u2)) / d


def _change_states(r1, r2):
    return float(np.max(np.abs(r1 - r2)))
