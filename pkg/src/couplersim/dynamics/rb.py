"""Single-qubit randomized benchmarking on a small open-system model."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.optimize import curve_fit

from ..device import NoiseSpec
from ..errors import FitFailure, ValidationError

# long enough that coherence-limited decays fall well below their plateau
DEFAULT_LENGTHS = (1, 50, 200, 500, 1000, 2000, 4000)


def _clifford_group():
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    s = np.diag([1, 1j])
    group = [np.eye(2, dtype=complex)]
    frontier = [np.eye(2, dtype=complex)]
    while frontier:
        new = []
        for g in frontier:
            for gen in (h, s):
                c = gen @ g
                if not any(_same_up_to_phase(c, x) for x in group):
                    group.append(c)
                    new.append(c)
        frontier = new
    return group


def _same_up_to_phase(a, b):
    return abs(abs(np.trace(a.conj().T @ b)) - 2) < 1e-9


CLIFFORDS = _clifford_group()
assert len(CLIFFORDS) == 24


def _inverse_index(u):
    for k, c in enumerate(CLIFFORDS):
        if _same_up_to_phase(c @ u, np.eye(2)):
            return k
    raise AssertionError("not a Clifford")


def _embed(u, n_levels):
    out = np.eye(n_levels, dtype=complex)
    out[:2, :2] = u
    return out


def _lindbladian(h, c_ops, dim):
    eye = np.eye(dim)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for c in c_ops:
        cdc = c.conj().T @ c
        sup += np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
    return sup


def _mode_collapse(noise: NoiseSpec | None, n_levels):
    if noise is None:
        return []
    a = np.diag(np.sqrt(np.arange(1, n_levels)), 1)
    n = np.diag(np.arange(n_levels, dtype=float))
    ops = [np.sqrt(1e-3 / noise.T1) * a]
    if noise.gamma_phi > 0:
        ops.append(np.sqrt(2e-3 * noise.gamma_phi) * n)
    return ops


def _embed_op(op, k, dims):
    mats = [np.eye(d) for d in dims]
    mats[k] = op
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


@dataclass
class RBResult:
    error_per_gate: float
    fit_params: dict
    lengths: np.ndarray
    survival: np.ndarray          # (n_seq, n_lengths)

    @property
    def mean_survival(self):
        return self.survival.mean(axis=0)


def _decay(m, a, p, b):
    return a * p ** m + b


def fit_rb(lengths, survival, tolerance: float = 3.0) -> tuple[float, dict]:
    """Fit A p^m + B to mean survival; returns (r, params) with r = (1 - p)/2."""
    lengths = np.asarray(lengths, dtype=float)
    mean = survival.mean(axis=0)
    err = survival.std(axis=0, ddof=1) / np.sqrt(survival.shape[0]) if survival.shape[0] > 1 \
        else np.zeros_like(mean)
    rises = np.diff(mean) - tolerance * np.hypot(err[1:], err[:-1]) - 1e-9
    if np.any(rises > 1e-3):
        raise FitFailure("survival is not a decaying function of sequence length")
    if np.all(np.abs(mean - mean[0]) < 1e-12) and mean[0] > 1 - 1e-9:
        return 0.0, {"A": 0.5, "p": 1.0, "B": 0.5}
    try:
        popt, _ = curve_fit(_decay, lengths, mean, p0=(0.5, 0.99, 0.5),
                            bounds=([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]), maxfev=20000)
    except RuntimeError as exc:
        raise FitFailure(str(exc)) from None
    a, p, b = popt
    return (1.0 - p) / 2.0, {"A": float(a), "p": float(p), "B": float(b)}


def single_qubit_rb(noise: NoiseSpec | None, gate_time: float = 20.0, n_seq: int = 30,
                    lengths=DEFAULT_LENGTHS, n_levels: int = 3,
                    seed: int = 0) -> RBResult:
    """Clifford RB of one transmon with relaxation and dephasing.

    Every Clifford is an ideal rotation on the 0-1 subspace followed by
    ``gate_time`` ns of free decay; survival is the |0> population after
    the inverting Clifford.
    """
    lengths = np.asarray(lengths, dtype=int)
    if np.any(np.diff(lengths) <= 0) or lengths[0] < 1:
        raise ValidationError("lengths must be positive and ascending")
    dim = n_levels
    decay = expm(_lindbladian(np.zeros((dim, dim)), _mode_collapse(noise, dim), dim) * gate_time)
    gates = [decay @ np.kron(_embed(c, dim), _embed(c, dim).conj()) for c in CLIFFORDS]
    rng = np.random.default_rng(seed)
    rho0 = np.zeros((dim, dim), dtype=complex)
    rho0[0, 0] = 1
    surv = np.empty((n_seq, len(lengths)))
    for s in range(n_seq):
        seq = rng.integers(0, 24, size=lengths[-1])
        for j, m in enumerate(lengths):
            net = np.eye(2, dtype=complex)
            vec = rho0.reshape(-1)
            for k in seq[:m]:
                vec = gates[k] @ vec
                net = CLIFFORDS[k] @ net
            vec = gates[_inverse_index(net)] @ vec
            surv[s, j] = vec.reshape(dim, dim)[0, 0].real
    r, params = fit_rb(lengths, surv)
    return RBResult(r, params, lengths, surv)


def coherence_limit(noise: NoiseSpec, gate_time: float) -> float:
    """r ~ (t/3)(1/T1 + 1/T_phi), T_phi from the echo time."""
    return gate_time * 1e-3 / 3.0 * (1.0 / noise.T1 + noise.gamma_phi)


def simultaneous_rb(noise_a: NoiseSpec | None, noise_b: NoiseSpec | None, xi_zz_khz: float,
                    gate_time: float = 20.0, n_seq: int = 30,
                    lengths=DEFAULT_LENGTHS, simultaneous: bool = True,
                    n_levels: int = 2, seed: int = 0) -> RBResult:
    """RB of qubit a while qubit b runs its own random sequence (or idles in |0>).

    The two qubits interact through ``xi_zz`` on |11> during every gate.
    """
    lengths = np.asarray(lengths, dtype=int)
    if np.any(np.diff(lengths) <= 0) or lengths[0] < 1:
        raise ValidationError("lengths must be positive and ascending")
    dims = [n_levels, n_levels]
    dim = n_levels * n_levels
    na = np.diag(np.arange(n_levels, dtype=float))
    nb = na.copy()
    h = 2 * np.pi * xi_zz_khz * 1e-6 * np.kron(np.minimum(na, 1), np.minimum(nb, 1))
    c_ops = [_embed_op(c, 0, dims) for c in _mode_collapse(noise_a, n_levels)]
    c_ops += [_embed_op(c, 1, dims) for c in _mode_collapse(noise_b, n_levels)]
    step = expm(_lindbladian(h, c_ops, dim) * gate_time)
    emb = [_embed(c, n_levels) for c in CLIFFORDS]
    eye_b = np.eye(n_levels)
    rng = np.random.default_rng(seed)
    rho0 = np.zeros((dim, dim), dtype=complex)
    rho0[0, 0] = 1
    proj_a0 = np.kron(np.diag([1.0] + [0.0] * (n_levels - 1)), eye_b)
    surv = np.empty((n_seq, len(lengths)))
    for s in range(n_seq):
        seq_a = rng.integers(0, 24, size=lengths[-1])
        seq_b = rng.integers(0, 24, size=lengths[-1])
        for j, m in enumerate(lengths):
            rho = rho0
            net_a = np.eye(2, dtype=complex)
            net_b = np.eye(2, dtype=complex)
            for ka, kb in itertools.chain(zip(seq_a[:m], seq_b[:m]), [(None, None)]):
                if ka is None:
                    ka, kb = _inverse_index(net_a), _inverse_index(net_b)
                else:
                    net_a = CLIFFORDS[ka] @ net_a
                    net_b = CLIFFORDS[kb] @ net_b
                ub = emb[kb] if simultaneous else eye_b
                u = np.kron(emb[ka], ub)
                rho = u @ rho @ u.conj().T
                rho = (step @ rho.reshape(-1)).reshape(dim, dim)
            surv[s, j] = np.real(np.trace(proj_a0 @ rho))
    r, params = fit_rb(lengths, surv)
    return RBResult(r, params, lengths, surv)
