"""Residual ZZ and exchange couplings extracted from dressed spectra."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize

from .device import (TWO_PI, DeviceGraph, EdgeCoupling, basis_index,
                     build_hamiltonian)
from .errors import AmbiguousLabeling, NoCrossingInWindow, ValidationError

OVERLAP_THRESHOLD = 0.5
NULL_XTOL = 1e-4  # GHz, i.e. 0.1 MHz


@dataclass(frozen=True)
class LabelEntry:
    eigenindex: int
    energy: float
    overlap: float


@dataclass(frozen=True)
class DressedLabeling:
    """Maximum-overlap assignment of bare product states to eigenstates."""

    entries: dict
    ambiguous: bool

    def __getitem__(self, occupation) -> LabelEntry:
        return self.entries[tuple(occupation)]

    def energy(self, occupation) -> float:
        return self.entries[tuple(occupation)].energy


def eigensystem(graph: DeviceGraph, frequencies):
    """Eigenvalues (GHz) and eigenvectors of the device Hamiltonian."""
    h = build_hamiltonian(graph, frequencies)
    w, v = np.linalg.eigh(h)
    return w / TWO_PI, v


def dressed_labeling(graph: DeviceGraph, frequencies, states: Sequence[Sequence[int]],
                     system=None) -> DressedLabeling:
    w, v = eigensystem(graph, frequencies) if system is None else system
    entries = {}
    claimed = set()
    ambiguous = False
    for occ in states:
        i = basis_index(graph, occ)
        weights = np.abs(v[i, :]) ** 2
        k = int(np.argmax(weights))
        overlap = float(weights[k])
        if overlap <= OVERLAP_THRESHOLD or k in claimed:
            ambiguous = True
        claimed.add(k)
        entries[tuple(occ)] = LabelEntry(k, float(w[k]), overlap)
    return DressedLabeling(entries, ambiguous)


def _occ(graph: DeviceGraph, **levels) -> tuple:
    occ = [0] * len(graph.modes)
    for lab, n in levels.items():
        occ[graph.index(lab)] = n
    return tuple(occ)


def _resolve_edge(graph: DeviceGraph, edge) -> EdgeCoupling:
    if edge is None:
        if len(graph.edges) != 1:
            raise ValidationError("graph has several edges; name one")
        return graph.edges[0]
    return graph.edge(edge)


def computational_labels(graph: DeviceGraph, edge) -> dict:
    e = _resolve_edge(graph, edge)
    return {
        (a, b): _occ(graph, **{e.qubit_a: a, e.qubit_b: b})
        for a in (0, 1) for b in (0, 1)
    }


def xi_zz(graph: DeviceGraph, frequencies, edge=None, system=None) -> float:
    """Residual ZZ in kHz: E11 - E10 - E01 + E00 with couplers in ground."""
    labels = computational_labels(graph, edge)
    lab = dressed_labeling(graph, frequencies, list(labels.values()), system)
    if lab.ambiguous:
        raise AmbiguousLabeling("computational states are not uniquely identifiable")
    e = {k: lab.energy(v) for k, v in labels.items()}
    return (e[1, 1] - e[1, 0] - e[0, 1] + e[0, 0]) * 1e6


# ---------------------------------------------------------------------------
# avoided crossings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Splitting:
    gap_min: float        # GHz
    sweep_at_min: float   # GHz, bare frequency of the swept mode
    coupling: float       # signed, MHz (half the splitting)
    gap_endpoints: tuple[float, float]


def _pair_gap(graph, frequencies, ia, ib):
    w, v = eigensystem(graph, frequencies)
    weights = np.abs(v[ia, :]) ** 2 + np.abs(v[ib, :]) ** 2
    top = np.argsort(weights)[-2:]
    s = v[np.ix_([ia, ib], top)]
    # Des Cloizeaux effective Hamiltonian on span{a, b}
    u, _, vt = np.linalg.svd(s)
    s_orth = u @ vt
    h_eff = s_orth @ np.diag(w[top]) @ s_orth.T
    return abs(w[top[1]] - w[top[0]]), h_eff[0, 1]


def min_splitting(graph: DeviceGraph, frequencies, state_a, state_b, sweep_mode: str,
                  window: tuple[float, float], n_scan: int = 41, xtol: float = 1e-7) -> Splitting:
    """Minimum dressed splitting between two bare states while sweeping one mode.

    A coarse scan brackets the minimum, golden-section search refines it.
    """
    ia, ib = basis_index(graph, state_a), basis_index(graph, state_b)
    base = dict(frequencies)

    def gap(f):
        fr = dict(base)
        fr[sweep_mode] = f
        return _pair_gap(graph, fr, ia, ib)[0]

    grid = np.linspace(window[0], window[1], n_scan)
    gaps = np.array([gap(f) for f in grid])
    k = int(np.argmin(gaps))
    if k == 0 or k == n_scan - 1:
        raise NoCrossingInWindow(
            f"gap minimum lies at the edge of the sweep window {window} for {sweep_mode}")
    res = optimize.minimize_scalar(gap, bracket=(grid[k - 1], grid[k], grid[k + 1]),
                                   method="golden", options={"xtol": xtol})
    f_min = float(res.x)
    g_min = float(res.fun)
    if g_min > gaps[k]:
        f_min, g_min = float(grid[k]), float(gaps[k])
    fr = dict(base)
    fr[sweep_mode] = f_min
    _, off = _pair_gap(graph, fr, ia, ib)
    sign = 1.0 if off >= 0 else -1.0
    return Splitting(g_min, f_min, sign * g_min / 2 * 1e3, (float(gaps[0]), float(gaps[-1])))


def _manifold_states(graph: DeviceGraph, e: EdgeCoupling, frequencies, manifold: str,
                     sweep: str | None):
    fa, fb = float(frequencies[e.qubit_a]), float(frequencies[e.qubit_b])
    if manifold == "one_excitation":
        # flux only lowers a transmon from its sweetspot, so the upper qubit moves
        sweep = sweep or (e.qubit_a if fa >= fb else e.qubit_b)
        other = e.qubit_b if sweep == e.qubit_a else e.qubit_a
        s1 = _occ(graph, **{sweep: 1})
        s2 = _occ(graph, **{other: 1})
        center = float(frequencies[other])
        return s1, s2, sweep, center
    if manifold == "two_excitation":
        high, low = (e.qubit_a, e.qubit_b) if fa >= fb else (e.qubit_b, e.qubit_a)
        sweep = sweep or low
        s1 = _occ(graph, **{high: 1, low: 1})
        s2 = _occ(graph, **{high: 2})
        spec_h = graph.mode(high)
        if sweep == low:
            center = float(frequencies[high]) + spec_h.alpha
        else:
            # E(11) = E(20): f_low + f_high = 2 f_high + alpha  ->  f_high = f_low - alpha
            center = float(frequencies[low]) - spec_h.alpha
        return s1, s2, sweep, center
    raise ValidationError(f"unknown manifold {manifold!r}")


def exchange_splitting(graph: DeviceGraph, frequencies, manifold: str = "one_excitation",
                       edge=None, sweep: str | None = None, half_width: float = 0.05) -> Splitting:
    e = _resolve_edge(graph, edge)
    s1, s2, sweep, center = _manifold_states(graph, e, frequencies, manifold, sweep)
    return min_splitting(graph, frequencies, s1, s2, sweep,
                         (center - half_width, center + half_width))


def exchange_coupling(graph: DeviceGraph, frequencies, manifold: str = "one_excitation",
                      edge=None, sweep: str | None = None, half_width: float = 0.05) -> float:
    """Signed J1 or J2 in MHz, half the minimum splitting of the anticrossing.

    The sign is the sign of the effective coupling between the two bare
    states at the anticrossing, so J passes through zero at its null.
    """
    return exchange_splitting(graph, frequencies, manifold, edge, sweep, half_width).coupling


def straddling_check(graph: DeviceGraph, edge, frequencies=None) -> bool:
    e = graph.edge(edge)
    fr = graph.sweetspots() if frequencies is None else frequencies
    qa, qb = graph.mode(e.qubit_a), graph.mode(e.qubit_b)
    fa, fb = float(fr[e.qubit_a]), float(fr[e.qubit_b])
    if fa >= fb:
        return fa + qa.alpha <= fb <= fa
    return fb + qb.alpha <= fa <= fb


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Null:
    frequency: float | None   # GHz
    valid: bool
    degenerate: bool = False
    n_crossings: int = 0


@dataclass
class InteractionProfile:
    edge: str
    coupler: str
    coupler_freqs: np.ndarray
    xi_zz: np.ndarray         # kHz, nan where masked
    j1: np.ndarray            # MHz
    j2: np.ndarray            # MHz
    nulls: dict = field(default_factory=dict)  # name -> Null

    @property
    def masks(self) -> dict:
        return {k: ~np.isfinite(getattr(self, k)) for k in ("xi_zz", "j1", "j2")}

    def null_ordering(self) -> list[str]:
        valid = [(n.frequency, k) for k, n in self.nulls.items() if n.valid]
        return [k for _, k in sorted(valid)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["f_coupler_GHz", "xi_zz_kHz", "j1_MHz", "j2_MHz",
                    "xi_zz_masked", "j1_masked", "j2_masked"])
        m = self.masks
        for i, f in enumerate(self.coupler_freqs):
            w.writerow([f"{f:.9f}"] + [_fmt(getattr(self, k)[i]) for k in ("xi_zz", "j1", "j2")]
                       + [int(m[k][i]) for k in ("xi_zz", "j1", "j2")])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "edge": self.edge,
            "coupler": self.coupler,
            "window_GHz": [float(self.coupler_freqs[0]), float(self.coupler_freqs[-1])],
            "nulls": {k: {"frequency_GHz": n.frequency, "valid": n.valid,
                          "degenerate": n.degenerate, "n_crossings": n.n_crossings}
                      for k, n in self.nulls.items()},
            "ordering": self.null_ordering(),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _fmt(x):
    return "nan" if not np.isfinite(x) else f"{x:.9g}"


def _profile_point(graph, e, base, fc):
    fr = dict(base)
    fr[e.coupler] = fc
    out = []
    try:
        out.append(xi_zz(graph, fr, e))
    except AmbiguousLabeling:
        out.append(np.nan)
    for manifold in ("one_excitation", "two_excitation"):
        try:
            out.append(exchange_coupling(graph, fr, manifold, e))
        except NoCrossingInWindow:
            out.append(np.nan)
    return out


def _quantity(graph, e, base, name):
    def fn(fc):
        fr = dict(base)
        fr[e.coupler] = fc
        if name == "xi_zz":
            return xi_zz(graph, fr, e)
        manifold = "one_excitation" if name == "j1" else "two_excitation"
        return exchange_coupling(graph, fr, manifold, e)
    return fn


def locate_null(fn, freqs, values, xtol=NULL_XTOL, floor: float = 1e-9) -> Null:
    """First sign change of ``values``; curves below ``floor`` everywhere are degenerate."""
    finite = np.isfinite(values)
    scale = np.nanmax(np.abs(values)) if finite.any() else 0.0
    if not finite.any() or scale < floor:
        return Null(None, False, degenerate=True)
    brackets = []
    idx = np.flatnonzero(finite)
    for i, j in zip(idx[:-1], idx[1:]):
        if values[i] == 0:
            brackets.append((freqs[i], freqs[i]))
        elif np.sign(values[i]) != np.sign(values[j]):
            brackets.append((freqs[i], freqs[j]))
    if not brackets:
        return Null(None, False)
    lo, hi = brackets[0]
    if lo == hi:
        return Null(float(lo), True, n_crossings=len(brackets))
    try:
        root = optimize.brentq(fn, lo, hi, xtol=xtol)
    except (ValueError, AmbiguousLabeling, NoCrossingInWindow):
        root = optimize.bisect(
            lambda f: np.interp(f, freqs[finite], values[finite]), lo, hi, xtol=xtol)
    return Null(float(root), True, n_crossings=len(brackets))


def interaction_profile(graph: DeviceGraph, edge, freq_window: tuple[float, float],
                        n_points: int = 66, frequencies: Mapping[str, float] | None = None,
                        subgraph: bool = True, executor=None) -> InteractionProfile:
    """Sample xi_ZZ, J1 and J2 over a coupler-frequency window and locate nulls."""
    e = graph.edge(edge)
    spec = graph.mode(e.coupler)
    lo, hi = freq_window
    if not lo < hi:
        raise ValidationError("frequency window must be increasing")
    if hi > spec.f_sweetspot + 1e-9 or lo <= spec.arc_minimum():
        raise ValidationError(
            f"window {freq_window} GHz is outside the flux arc of {e.coupler} "
            f"(max {spec.f_sweetspot} GHz)")
    g = graph.edge_subgraph(e) if subgraph else graph
    base = g.sweetspots() if frequencies is None else {
        k: v for k, v in frequencies.items() if k in g.labels}
    freqs = np.linspace(lo, hi, n_points)
    if executor is None:
        rows = [_profile_point(g, e, base, fc) for fc in freqs]
    else:
        rows = list(executor.map(_profile_point, [g] * n_points, [e] * n_points,
                                 [base] * n_points, freqs))
    data = np.array(rows, dtype=float).reshape(n_points, 3)
    prof = InteractionProfile(e.name, e.coupler, freqs, data[:, 0], data[:, 1], data[:, 2])
    for k, name in enumerate(("xi_zz", "j1", "j2")):
        # xi in kHz carries ~1e-8 of rounding noise from GHz-scale eigenvalues
        floor = 1e-6 if name == "xi_zz" else 1e-9
        prof.nulls[name] = locate_null(_quantity(g, e, base, name), freqs, data[:, k], floor=floor)
    return prof
