"""Device parameters, flux arcs and the truncated multi-mode Hamiltonian.

Frequencies cross the public API in GHz (couplings in MHz); matrices
returned by :func:`build_hamiltonian` are angular frequencies in rad/ns
with hbar = 1.
"""
from __future__ import annotations

import functools
import itertools
import math
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Mapping

import numpy as np

from .config import Document, parse_file, parse_text
from .errors import DimensionCap, OutOfArcRange, ValidationError

TWO_PI = 2.0 * math.pi
DEFAULT_DIMENSION_CAP = 3 ** 5


@dataclass(frozen=True)
class ModeSpec:
    """One transmon or coupler.

    ``f_sweetspot`` in GHz, ``anharmonicity`` in MHz (negative),
    ``flux_offset`` in flux quanta.
    """

    label: str
    kind: str = "transmon"
    f_sweetspot: float = 5.0
    anharmonicity: float = -250.0
    squid_asymmetry: float = 0.0
    flux_offset: float = 0.0
    n_levels: int = 3

    def __post_init__(self):
        if self.kind not in ("transmon", "coupler"):
            raise ValidationError(f"mode {self.label}: kind must be transmon or coupler")
        if not self.anharmonicity < 0:
            raise ValidationError(f"mode {self.label}: anharmonicity must be negative")
        if not self.f_sweetspot > 0:
            raise ValidationError(f"mode {self.label}: f_sweetspot must be positive")
        if not 0 <= self.squid_asymmetry < 1:
            raise ValidationError(f"mode {self.label}: squid_asymmetry must lie in [0, 1)")
        if int(self.n_levels) != self.n_levels or self.n_levels < 2:
            raise ValidationError(f"mode {self.label}: n_levels must be an integer >= 2")

    @property
    def alpha(self) -> float:
        """Anharmonicity in GHz."""
        return self.anharmonicity * 1e-3

    @property
    def e_c(self) -> float:
        """Charging energy E_C/h in GHz (transmon approximation)."""
        return -self.alpha

    @property
    def e_j(self) -> float:
        """Josephson energy E_J/h in GHz at the sweetspot."""
        return (self.f_sweetspot + self.e_c) ** 2 / (8.0 * self.e_c)

    @property
    def ej_over_ec(self) -> float:
        return self.e_j / self.e_c

    def arc_minimum(self) -> float:
        return math.sqrt(8.0 * self.e_j * self.e_c * self.squid_asymmetry) - self.e_c


@dataclass(frozen=True)
class NoiseSpec:
    """Coherence numbers for one mode; times in µs, flux noise in flux quanta."""

    T1: float
    T2_ramsey: float
    T2_echo: float
    flux_noise_amp: float = 0.0

    def __post_init__(self):
        if min(self.T1, self.T2_ramsey, self.T2_echo) <= 0:
            raise ValidationError("coherence times must be positive")
        if self.flux_noise_amp < 0:
            raise ValidationError("flux_noise_amp must be non-negative")
        # measured tables can violate these marginally
        if self.T2_ramsey > self.T2_echo * 1.05 or self.T2_echo > 2 * self.T1 * 1.05:
            warnings.warn(
                f"NoiseSpec violates T2R <= T2E <= 2 T1 ({self.T2_ramsey}, {self.T2_echo}, {self.T1})",
                stacklevel=3,
            )

    @property
    def gamma_phi(self) -> float:
        """White pure-dephasing rate 1/T_phi in 1/µs, from T1 and T2 echo."""
        return max(0.0, 1.0 / self.T2_echo - 0.5 / self.T1)


@dataclass(frozen=True)
class EdgeCoupling:
    """Two transmons joined by a tunable coupler. Couplings in MHz."""

    qubit_a: str
    qubit_b: str
    coupler: str
    g_qq: float = 6.0
    g_qc_a: float = 70.0
    g_qc_b: float = 70.0

    def __post_init__(self):
        if len({self.qubit_a, self.qubit_b, self.coupler}) != 3:
            raise ValidationError(f"edge {self.name}: identifiers must be distinct")
        if not (self.g_qc_a > 0 and self.g_qc_b > 0):
            raise ValidationError(f"edge {self.name}: g_qc must be positive")

    @property
    def name(self) -> str:
        return f"{self.qubit_a}-{self.qubit_b}"

    def swapped(self) -> "EdgeCoupling":
        return EdgeCoupling(self.qubit_b, self.qubit_a, self.coupler,
                            self.g_qq, self.g_qc_b, self.g_qc_a)


@dataclass(frozen=True)
class DirectCoupling:
    """Extra capacitive coupling between any two modes, in MHz."""

    mode_a: str
    mode_b: str
    g: float


@dataclass(frozen=True)
class DeviceGraph:
    modes: tuple[ModeSpec, ...]
    edges: tuple[EdgeCoupling, ...] = ()
    noise: tuple[tuple[str, NoiseSpec], ...] = ()
    direct: tuple[DirectCoupling, ...] = ()
    name: str = "device"
    dimension_cap: int = DEFAULT_DIMENSION_CAP

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "direct", tuple(self.direct))
        if isinstance(self.noise, Mapping):
            object.__setattr__(self, "noise", tuple(self.noise.items()))
        else:
            object.__setattr__(self, "noise", tuple(self.noise))
        labels = [m.label for m in self.modes]
        if len(set(labels)) != len(labels):
            raise ValidationError("duplicate mode labels")
        known = set(labels)
        for e in self.edges:
            for lab in (e.qubit_a, e.qubit_b, e.coupler):
                if lab not in known:
                    raise ValidationError(f"edge {e.name} references unknown mode {lab}")
        for d in self.direct:
            if d.mode_a not in known or d.mode_b not in known or d.mode_a == d.mode_b:
                raise ValidationError(f"bad direct coupling {d.mode_a}-{d.mode_b}")
        for lab, _ in self.noise:
            if lab not in known:
                raise ValidationError(f"noise given for unknown mode {lab}")

    # -- lookup helpers ------------------------------------------------------
    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(m.label for m in self.modes)

    def mode(self, label) -> ModeSpec:
        for m in self.modes:
            if m.label == label:
                return m
        raise ValidationError(f"no mode {label!r}")

    def index(self, label) -> int:
        return self.labels.index(label)

    def noise_for(self, label) -> NoiseSpec | None:
        return dict(self.noise).get(label)

    def edge(self, name_or_pair) -> EdgeCoupling:
        if isinstance(name_or_pair, EdgeCoupling):
            return name_or_pair
        if isinstance(name_or_pair, str):
            for e in self.edges:
                if name_or_pair in (e.name, e.coupler, f"{e.qubit_b}-{e.qubit_a}"):
                    return e
        else:
            pair = set(name_or_pair)
            for e in self.edges:
                if {e.qubit_a, e.qubit_b} == pair:
                    return e
        raise ValidationError(f"no edge {name_or_pair!r}")

    @property
    def dimension(self) -> int:
        return int(np.prod([m.n_levels for m in self.modes]))

    def sweetspots(self) -> dict[str, float]:
        return {m.label: m.f_sweetspot for m in self.modes}

    def pair_couplings(self) -> list[tuple[str, str, float]]:
        """All pairwise couplings (mode_a, mode_b, g in MHz)."""
        out = []
        for e in self.edges:
            out.append((e.qubit_a, e.qubit_b, e.g_qq))
            out.append((e.qubit_a, e.coupler, e.g_qc_a))
            out.append((e.qubit_b, e.coupler, e.g_qc_b))
        out.extend((d.mode_a, d.mode_b, d.g) for d in self.direct)
        return out

    # -- derived graphs -------------------------------------------------------
    def subgraph(self, labels) -> "DeviceGraph":
        keep = [m for m in self.modes if m.label in set(labels)]
        names = {m.label for m in keep}
        edges = [e for e in self.edges if {e.qubit_a, e.qubit_b, e.coupler} <= names]
        direct = [d for d in self.direct if {d.mode_a, d.mode_b} <= names]
        noise = [(k, v) for k, v in self.noise if k in names]
        return DeviceGraph(tuple(keep), tuple(edges), tuple(noise), tuple(direct),
                           self.name, self.dimension_cap)

    def edge_subgraph(self, edge) -> "DeviceGraph":
        e = self.edge(edge)
        return self.subgraph((e.qubit_a, e.qubit_b, e.coupler))

    def with_truncation(self, n_levels: int, labels=None) -> "DeviceGraph":
        modes = tuple(
            replace(m, n_levels=n_levels) if labels is None or m.label in labels else m
            for m in self.modes
        )
        cap = max(self.dimension_cap, int(np.prod([m.n_levels for m in modes])))
        return replace(self, modes=modes, dimension_cap=cap)

    def with_couplings(self, g_qq=None, g_qc=None) -> "DeviceGraph":
        edges = tuple(
            replace(e,
                    g_qq=e.g_qq if g_qq is None else g_qq,
                    g_qc_a=e.g_qc_a if g_qc is None else g_qc,
                    g_qc_b=e.g_qc_b if g_qc is None else g_qc)
            for e in self.edges
        )
        return replace(self, edges=edges)


# ---------------------------------------------------------------------------
# flux arcs
# ---------------------------------------------------------------------------

def _squid_factor(spec: ModeSpec, phi):
    x = np.pi * (np.asarray(phi, dtype=float) - spec.flux_offset)
    a = spec.squid_asymmetry
    return np.sqrt(np.cos(x) ** 2 + a * a * np.sin(x) ** 2)


def mode_frequency_at_flux(spec: ModeSpec, phi):
    """0-1 frequency (GHz) of ``spec`` at flux ``phi`` (flux quanta)."""
    d = _squid_factor(spec, phi)
    f = np.sqrt(8.0 * spec.e_j * spec.e_c * d) - spec.e_c
    return float(f) if np.ndim(f) == 0 else f


def flux_slope(spec: ModeSpec, phi):
    """df/dPhi in GHz per flux quantum."""
    x = np.pi * (np.asarray(phi, dtype=float) - spec.flux_offset)
    a2 = spec.squid_asymmetry ** 2
    d = _squid_factor(spec, phi)
    dd = np.pi * np.sin(x) * np.cos(x) * (a2 - 1.0) / d
    slope = np.sqrt(8.0 * spec.e_j * spec.e_c) * dd / (2.0 * np.sqrt(d))
    return float(slope) if np.ndim(slope) == 0 else slope


def flux_for_frequency(spec: ModeSpec, f_target: float) -> float:
    """Flux in [flux_offset, flux_offset + 0.5] where the arc reaches ``f_target``."""
    if f_target > spec.f_sweetspot + 1e-12:
        raise OutOfArcRange(
            f"{spec.label}: {f_target:.6f} GHz is above the sweetspot {spec.f_sweetspot} GHz")
    if f_target <= spec.arc_minimum():
        raise OutOfArcRange(f"{spec.label}: {f_target:.6f} GHz is below the arc minimum")
    ratio = min(1.0, (f_target + spec.e_c) / (spec.f_sweetspot + spec.e_c))
    a2 = spec.squid_asymmetry ** 2
    c2 = (ratio ** 4 - a2) / (1.0 - a2)
    c = math.sqrt(min(1.0, max(0.0, c2)))
    return spec.flux_offset + math.acos(c) / math.pi


def flux_sensitivity(spec: ModeSpec, f: float) -> float:
    """|df/dPhi| (GHz per flux quantum) at the operating frequency ``f``."""
    return abs(flux_slope(spec, flux_for_frequency(spec, f)))


# ---------------------------------------------------------------------------
# Hamiltonian
# ---------------------------------------------------------------------------

class _Operators:
    """Frequency-independent pieces of the Hamiltonian of one graph."""

    def __init__(self, graph: DeviceGraph):
        dims = [m.n_levels for m in graph.modes]
        self.dims = dims
        self.dim = int(np.prod(dims))
        occ = np.array(list(itertools.product(*[range(d) for d in dims])), dtype=float)
        self.occupations = occ.reshape(self.dim, len(dims))
        self.number = self.occupations.T.copy()          # (modes, dim)
        self.kerr = 0.5 * self.number * (self.number - 1.0)
        coupling = np.zeros((self.dim, self.dim))
        quads = {}
        for lab, d in zip(graph.labels, dims):
            quads[lab] = None
        for a, b, g in graph.pair_couplings():
            if g == 0:
                continue
            xa = quads[a] if quads[a] is not None else _quadrature(dims, graph.index(a))
            xb = quads[b] if quads[b] is not None else _quadrature(dims, graph.index(b))
            quads[a], quads[b] = xa, xb
            coupling += (g * 1e-3) * (xa @ xb)
        self.coupling = TWO_PI * coupling


def _quadrature(dims, k):
    ops = [np.eye(d) for d in dims]
    n = dims[k]
    a = np.diag(np.sqrt(np.arange(1, n)), 1)
    ops[k] = a + a.T
    out = ops[0]
    for op in ops[1:]:
        out = np.kron(out, op)
    return out


@functools.lru_cache(maxsize=64)
def operators(graph: DeviceGraph) -> _Operators:
    if graph.dimension > graph.dimension_cap:
        raise DimensionCap(
            f"truncated dimension {graph.dimension} exceeds cap {graph.dimension_cap}")
    return _Operators(graph)


def _frequency_vector(graph: DeviceGraph, frequencies: Mapping[str, float]) -> np.ndarray:
    try:
        return np.array([float(frequencies[lab]) for lab in graph.labels])
    except KeyError as exc:
        raise ValidationError(f"no frequency assigned to mode {exc.args[0]}") from None


def diagonal_energies(graph: DeviceGraph, frequencies) -> np.ndarray:
    """Bare (uncoupled) energies in GHz, one per basis state."""
    ops = operators(graph)
    f = _frequency_vector(graph, frequencies)
    alpha = np.array([m.alpha for m in graph.modes])
    return f @ ops.number + alpha @ ops.kerr


def build_hamiltonian(graph: DeviceGraph, frequencies: Mapping[str, float]) -> np.ndarray:
    """Hamiltonian matrix (rad/ns) for mode frequencies in GHz.

    Each mode is a Kerr oscillator, and couplings carry the full
    ``g (a + a†)(b + b†)`` product including counter-rotating terms.
    """
    ops = operators(graph)
    h = ops.coupling.copy()
    h[np.diag_indices_from(h)] += TWO_PI * diagonal_energies(graph, frequencies)
    return h


def basis_index(graph: DeviceGraph, occupation) -> int:
    """Index of a bare product state given per-mode occupations.

    ``occupation`` is a tuple in mode order or a mapping label -> level
    (unlisted modes in the ground state).
    """
    if isinstance(occupation, Mapping):
        occ = [0] * len(graph.modes)
        for lab, n in occupation.items():
            occ[graph.index(lab)] = n
    else:
        occ = list(occupation)
    idx = 0
    for n, m in zip(occ, graph.modes):
        if not 0 <= n < m.n_levels:
            raise ValidationError(f"level {n} outside truncation of {m.label}")
        idx = idx * m.n_levels + n
    return idx


@dataclass(frozen=True)
class CoherenceEstimate:
    T1_eff: float
    T2_eff: float
    decay_shape: str
    sin2_theta: float
    white_rate: float
    flux_rate: float


def hybridized_coherence(graph: DeviceGraph, frequencies, mode: str) -> CoherenceEstimate:
    """Coherence of a transmon's qubit-like mode dressed by its coupler.

    Rates combine as hybridization-weighted averages: relaxation mixes the
    bare qubit and coupler T1, dephasing adds the coupler's first-order flux
    sensitivity (quasi-static 1/f noise) weighted by sin^2(theta).
    """
    spec = graph.mode(mode)
    if spec.kind != "transmon":
        raise ValidationError(f"{mode} is not a transmon")
    couplers = [e.coupler for e in graph.edges if mode in (e.qubit_a, e.qubit_b)]
    if len(couplers) != 1:
        raise ValidationError(f"{mode} must be adjacent to exactly one coupler")
    coupler = graph.mode(couplers[0])
    nq, nc = graph.noise_for(mode), graph.noise_for(coupler.label)
    if nq is None or nc is None:
        raise ValidationError("noise parameters required for qubit and coupler")

    h = build_hamiltonian(graph, frequencies)
    _, vecs = np.linalg.eigh(h)
    i_q = basis_index(graph, {mode: 1})
    i_c = basis_index(graph, {coupler.label: 1})
    k = int(np.argmax(np.abs(vecs[i_q, :]) ** 2))
    cos2 = abs(vecs[i_q, k]) ** 2
    sin2 = abs(vecs[i_c, k]) ** 2

    gamma1 = cos2 / nq.T1 + sin2 / nc.T1
    white = nq.gamma_phi
    f_c = float(frequencies[coupler.label])
    slope = flux_sensitivity(coupler, min(f_c, coupler.f_sweetspot))
    # GHz/Phi0 * Phi0 -> GHz; 2*pi*GHz is rad/ns, *1e3 for 1/µs
    flux = TWO_PI * nc.flux_noise_amp * slope * sin2 * 1e3
    t2 = 1.0 / (0.5 * gamma1 + white + flux)
    shape = "gaussian-dominated" if flux > white else "exponential"
    return CoherenceEstimate(1.0 / gamma1, t2, shape, sin2, white, flux)


# ---------------------------------------------------------------------------
# device files
# ---------------------------------------------------------------------------

_MODE_KEYS = {"kind", "f_sweetspot", "anharmonicity", "squid_asymmetry", "flux_offset",
              "n_levels", "T1", "T2_ramsey", "T2_echo", "flux_noise_amp"}
_EDGE_KEYS = {"qubit_a", "qubit_b", "coupler", "g_qq", "g_qc", "g_qc_a", "g_qc_b"}


def device_from_document(doc: Document, g_qq=None, g_qc=None) -> DeviceGraph:
    modes, noise, edges, direct = [], {}, [], []
    dev = doc.one("device", required=False)
    name = dev["name"].text() if dev is not None and "name" in dev else "device"
    cap = dev["dimension_cap"].integer() if dev is not None and "dimension_cap" in dev else DEFAULT_DIMENSION_CAP
    for sec in doc.of_kind("mode"):
        sec.check_keys(_MODE_KEYS)
        if not sec.name:
            raise sec.error("[mode] needs a label")
        try:
            spec = ModeSpec(
                label=sec.name,
                kind=sec["kind"].text() if "kind" in sec else "transmon",
                f_sweetspot=sec["f_sweetspot"].number("GHz"),
                anharmonicity=sec["anharmonicity"].number("MHz"),
                squid_asymmetry=sec["squid_asymmetry"].number() if "squid_asymmetry" in sec else 0.0,
                flux_offset=sec["flux_offset"].number("phi0") if "flux_offset" in sec else 0.0,
                n_levels=sec["n_levels"].integer() if "n_levels" in sec else 3,
            )
        except ValidationError as exc:
            if exc.line is None:
                raise sec.error(str(exc)) from None
            raise
        modes.append(spec)
        if "T1" in sec:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    noise[sec.name] = NoiseSpec(
                        T1=sec["T1"].number("us"),
                        T2_ramsey=sec["T2_ramsey"].number("us"),
                        T2_echo=sec["T2_echo"].number("us"),
                        flux_noise_amp=sec["flux_noise_amp"].number("phi0") if "flux_noise_amp" in sec else 0.0,
                    )
            except ValidationError as exc:
                if exc.line is None:
                    raise sec.error(str(exc)) from None
                raise
    for sec in doc.of_kind("edge"):
        sec.check_keys(_EDGE_KEYS)
        gqc = sec["g_qc"].number("MHz") if "g_qc" in sec else None
        try:
            edges.append(EdgeCoupling(
                qubit_a=sec["qubit_a"].text(),
                qubit_b=sec["qubit_b"].text(),
                coupler=sec["coupler"].text(),
                g_qq=g_qq if g_qq is not None else sec["g_qq"].number("MHz"),
                g_qc_a=g_qc if g_qc is not None else (sec["g_qc_a"].number("MHz") if "g_qc_a" in sec else gqc),
                g_qc_b=g_qc if g_qc is not None else (sec["g_qc_b"].number("MHz") if "g_qc_b" in sec else gqc),
            ))
        except (ValidationError, TypeError) as exc:
            raise sec.error(f"invalid edge: {exc}") from None
    for sec in doc.of_kind("coupling"):
        sec.check_keys({"mode_a", "mode_b", "g"})
        direct.append(DirectCoupling(sec["mode_a"].text(), sec["mode_b"].text(), sec["g"].number("MHz")))
    if not modes:
        raise ValidationError("device file defines no modes", source=doc.source)
    try:
        return DeviceGraph(tuple(modes), tuple(edges), noise, tuple(direct), name, cap)
    except ValidationError as exc:
        raise ValidationError(str(exc), source=doc.source) from None


def load_device(path, **overrides) -> DeviceGraph:
    return device_from_document(parse_file(path), **overrides)


def device_from_text(text: str, **overrides) -> DeviceGraph:
    return device_from_document(parse_text(text, source="<text>"), **overrides)


def reference_device_text() -> str:
    return resources.files("couplersim.data").joinpath("starfish_device.cfg").read_text()


def reference_device(**overrides) -> DeviceGraph:
    """The five-transmon, four-coupler starfish device shipped with the package."""
    return device_from_text(reference_device_text(), **overrides)


def idle_frequencies(graph: DeviceGraph, **coupler_freqs) -> dict[str, float]:
    freqs = graph.sweetspots()
    freqs.update(coupler_freqs)
    return freqs
