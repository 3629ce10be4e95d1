"""Lookup-table capacitance matrices for transmon/coupler layouts.

Each circuit element (transmon pocket, tunable coupler) is characterised by
a table of Maxwell capacitance matrices simulated at the 2^n corners of a
box of geometry dimensions.  Inside the box the matrix is obtained by
multilinear interpolation, element blocks are stamped into a global matrix,
floating pads are eliminated and charging/coupling energies follow from
the inverse.  A synthetic generator replaces field simulation so that all
of this can be checked against a known ground truth.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import constants

from .config import Document, parse_file, parse_text
from .errors import (LabelMismatch, NonConvergence, OutOfRange, SingularMatrix, Unreachable,
                     ValidationError)

# e^2 / (h * 1 fF) in GHz
E2_OVER_H = constants.e ** 2 / (constants.h * 1e-15) / 1e9


# ---------------------------------------------------------------------------
# lookup tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeometryLUT:
    """Corner capacitance matrices (fF) over a box of dimensions (um).

    Corner ``c`` has dimension ``k`` at its high value when bit ``k`` of
    ``c`` is set.
    """

    name: str
    dim_names: tuple
    corner_low: np.ndarray
    corner_high: np.ndarray
    nodes: tuple
    corners: np.ndarray          # (2**n_dims, n_nodes, n_nodes)

    def __post_init__(self):
        object.__setattr__(self, "dim_names", tuple(self.dim_names))
        object.__setattr__(self, "nodes", tuple(self.nodes))
        lo = np.asarray(self.corner_low, dtype=float)
        hi = np.asarray(self.corner_high, dtype=float)
        c = np.asarray(self.corners, dtype=float)
        n = len(self.dim_names)
        k = len(self.nodes)
        if lo.shape != (n,) or hi.shape != (n,):
            raise ValidationError(f"LUT {self.name}: corner bounds need {n} values")
        if np.any(hi <= lo):
            raise ValidationError(f"LUT {self.name}: corner_high must exceed corner_low")
        if c.shape != (2 ** n, k, k):
            raise ValidationError(
                f"LUT {self.name}: expected {2 ** n} corner matrices of size {k}x{k}, got {c.shape}")
        for idx, m in enumerate(c):
            if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
                raise ValidationError(f"LUT {self.name}: corner {idx} is not symmetric")
            off = np.abs(m).sum(axis=1) - np.abs(np.diag(m))
            if np.any(np.diag(m) < off - 1e-12):
                warnings.warn(f"LUT {self.name}: corner {idx} is not diagonally dominant",
                              stacklevel=3)
        for arr in (lo, hi, c):
            arr.setflags(write=False)
        object.__setattr__(self, "corner_low", lo)
        object.__setattr__(self, "corner_high", hi)
        object.__setattr__(self, "corners", c)

    @property
    def n_dims(self) -> int:
        return len(self.dim_names)

    def normalize(self, dims) -> np.ndarray:
        x = np.asarray(dims, dtype=float)
        if x.shape != (self.n_dims,):
            raise ValidationError(f"LUT {self.name}: expected {self.n_dims} dimensions")
        u = (x - self.corner_low) / (self.corner_high - self.corner_low)
        for k, uk in enumerate(u):
            if uk < -1e-12 or uk > 1 + 1e-12:
                raise OutOfRange(
                    f"{self.dim_names[k]} = {x[k]} um outside "
                    f"[{self.corner_low[k]}, {self.corner_high[k]}]")
        return np.clip(u, 0.0, 1.0)

    def denormalize(self, u) -> np.ndarray:
        return self.corner_low + np.asarray(u, dtype=float) * (self.corner_high - self.corner_low)

    def corner_dims(self, index: int) -> np.ndarray:
        bits = [(index >> k) & 1 for k in range(self.n_dims)]
        return np.where(bits, self.corner_high, self.corner_low)


def _corner_weights(u) -> np.ndarray:
    w = np.ones(1)
    for uk in u:
        # little-endian corner index: dimension k toggles in blocks of 2**k
        w = np.kron(np.array([1.0 - uk, uk]), w)
    return w


def interpolate(lut: GeometryLUT, dims) -> np.ndarray:
    """Multilinear interpolation of the corner matrices at ``dims`` (um)."""
    return interpolate_normalized(lut, lut.normalize(dims))


def interpolate_normalized(lut: GeometryLUT, u) -> np.ndarray:
    return np.tensordot(_corner_weights(u), lut.corners, axes=1)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Block:
    """One element's capacitance matrix with global node labels."""

    matrix: np.ndarray
    nodes: tuple
    provenance: dict = field(default_factory=dict, compare=False)


def element_block(lut: GeometryLUT, dims, node_names: dict | None = None, label: str = "") -> Block:
    """Interpolate ``lut`` and rename its local nodes to global labels."""
    node_names = node_names or {}
    nodes = tuple(node_names.get(n, n) for n in lut.nodes)
    return Block(interpolate(lut, dims), nodes,
                 {"lut": lut.name, "label": label, "dims": [float(d) for d in dims]})


@dataclass(frozen=True)
class AssembledCapacitance:
    matrix: np.ndarray
    nodes: tuple
    provenance: tuple = ()

    def index(self, node) -> int:
        try:
            return self.nodes.index(node)
        except ValueError:
            raise LabelMismatch(f"no node {node!r}") from None

    def entry(self, a, b) -> float:
        return float(self.matrix[self.index(a), self.index(b)])

    def reduced(self, keep) -> "AssembledCapacitance":
        """Eliminate all nodes not in ``keep`` (floating, no junction)."""
        keep = [n for n in self.nodes if n in set(keep)]
        drop = [n for n in self.nodes if n not in set(keep)]
        if not drop:
            return self
        ik = [self.index(n) for n in keep]
        idr = [self.index(n) for n in drop]
        c = self.matrix
        cpp = c[np.ix_(idr, idr)]
        try:
            schur = c[np.ix_(ik, ik)] - c[np.ix_(ik, idr)] @ np.linalg.solve(cpp, c[np.ix_(idr, ik)])
        except np.linalg.LinAlgError:
            raise SingularMatrix("floating-node block is singular") from None
        schur = 0.5 * (schur + schur.T)
        return AssembledCapacitance(schur, tuple(keep), self.provenance)


def assemble(q_i: Block, coupler: Block, q_j: Block) -> AssembledCapacitance:
    """Stamp the three element blocks into one Maxwell matrix.

    The coupler block defines the shared nodes.  Every transmon node other
    than its own island (the first node) must appear in the coupler block;
    the two transmon islands never touch directly.
    """
    shared = set(coupler.nodes)
    for blk in (q_i, q_j):
        island = blk.nodes[0]
        if island in shared:
            raise LabelMismatch(f"transmon island {island!r} collides with a coupler node")
        for n in blk.nodes[1:]:
            if n not in shared:
                raise LabelMismatch(f"node {n!r} of {island} has no match in the coupler block")
    if q_i.nodes[0] == q_j.nodes[0]:
        raise LabelMismatch("the two transmon islands carry the same label")
    nodes = (q_i.nodes[0],) + tuple(coupler.nodes) + (q_j.nodes[0],)
    pos = {n: k for k, n in enumerate(nodes)}
    total = np.zeros((len(nodes), len(nodes)))
    for blk in (q_i, coupler, q_j):
        idx = [pos[n] for n in blk.nodes]
        total[np.ix_(idx, idx)] += blk.matrix
    total = 0.5 * (total + total.T)
    return AssembledCapacitance(total, nodes, (q_i.provenance, coupler.provenance, q_j.provenance))


# ---------------------------------------------------------------------------
# energies and couplings
# ---------------------------------------------------------------------------

@dataclass
class Energies:
    e_c: dict          # node -> GHz
    e_coupling: dict   # (node, node) -> GHz
    e_j: dict

    def coupling(self, a, b) -> float:
        return self.e_coupling.get((a, b), self.e_coupling.get((b, a)))


def energies_from_capacitance(cap: AssembledCapacitance, josephson: dict | None = None) -> Energies:
    """Charging and coupling energies in GHz.

    E_C,k = e^2/(2h) (C^-1)_kk and E_kl = e^2/h (C^-1)_kl.  When
    ``josephson`` is given, nodes without a junction are treated as
    floating and eliminated first.
    """
    josephson = dict(josephson or {})
    if josephson:
        missing = [n for n in josephson if n not in cap.nodes]
        if missing:
            raise LabelMismatch(f"unknown junction nodes {missing}")
        cap = cap.reduced(list(josephson))
    c = cap.matrix
    if np.linalg.cond(c) > 1e12:
        raise SingularMatrix("capacitance matrix is singular")
    inv = np.linalg.inv(c)
    inv = 0.5 * (inv + inv.T)
    e_c = {n: 0.5 * E2_OVER_H * inv[k, k] for k, n in enumerate(cap.nodes)}
    if any(v <= 0 for v in e_c.values()):
        raise SingularMatrix("non-positive charging energy; capacitance matrix is not positive definite")
    e_kl = {(a, b): E2_OVER_H * inv[i, j]
            for (i, a), (j, b) in itertools.combinations(enumerate(cap.nodes), 2)}
    return Energies(e_c, e_kl, josephson)


def coupling_g(e_kl: float, ej_a: float, ec_a: float, ej_b: float, ec_b: float) -> float:
    """g = E_kl / sqrt(2) * (E_Ja/E_Ca * E_Jb/E_Cb)^(1/4), same unit as E_kl."""
    for v in (ej_a, ec_a, ej_b, ec_b):
        if not v > 0:
            raise ValidationError("Josephson and charging energies must be positive")
    return e_kl / math.sqrt(2.0) * ((ej_a / ec_a) * (ej_b / ec_b)) ** 0.25


def coupling_strengths(e_ij: float, e_ic: float, qubit_i: tuple, qubit_j: tuple, coupler: tuple,
                       e_jc: float | None = None) -> dict:
    """g_qq and g_qc (MHz) from coupling energies (GHz) and (E_J, E_C) pairs."""
    out = {"g_qq": 1e3 * coupling_g(e_ij, *qubit_i, *qubit_j),
           "g_qc": 1e3 * coupling_g(e_ic, *qubit_i, *coupler)}
    if e_jc is not None:
        out["g_qc_j"] = 1e3 * coupling_g(e_jc, *qubit_j, *coupler)
    return out


# ---------------------------------------------------------------------------
# synthetic field-solver stand-in
# ---------------------------------------------------------------------------

TRANSMON_DIMS = ("pad_width", "coupler_arm_length", "coupler_arm_width", "coupler_gap",
                 "readout_arm_length", "readout_arm_width", "readout_gap")
TRANSMON_LOW = np.array([420.0, 120.0, 10.0, 8.0, 100.0, 10.0, 8.0])
TRANSMON_HIGH = np.array([500.0, 220.0, 30.0, 20.0, 200.0, 30.0, 20.0])
TRANSMON_NODES = ("island", "coupler", "pad")

COUPLER_DIMS = ("island_length", "pad_coupling_length", "pad_width")
COUPLER_LOW = np.array([300.0, 50.0, 20.0])
COUPLER_HIGH = np.array([500.0, 150.0, 60.0])
COUPLER_NODES = ("coupler", "pad")


def _maxwell(nodes, branches) -> np.ndarray:
    """Maxwell matrix from branch capacitances {(a, b): C}, b=None for ground."""
    pos = {n: k for k, n in enumerate(nodes)}
    m = np.zeros((len(nodes), len(nodes)))
    for (a, b), c in branches.items():
        i = pos[a]
        m[i, i] += c
        if b is not None:
            j = pos[b]
            m[j, j] += c
            m[i, j] -= c
            m[j, i] -= c
    return m


def transmon_branches(u) -> dict:
    """Branch capacitances (fF) of the transmon pocket; multilinear in u."""
    u0, u1, u2, u3, u4, u5, u6 = u
    return {
        ("island", None): 58.0 + 12.0 * u0 + 3.0 * u4 + 1.0 * u5 - 1.0 * u6 + 0.5 * u4 * u5,
        ("island", "coupler"): 0.6 + 1.6 * u1 + 0.4 * u2 - 0.3 * u3 + 0.2 * u1 * u2,
        ("island", "pad"): 1.5 + 3.0 * u1 + 0.8 * u2 - 0.6 * u3 + 0.3 * u1 * u2,
        ("coupler", "pad"): 0.3 + 0.5 * u1,
        ("coupler", None): 0.5 + 0.3 * u1,
        ("pad", None): 1.0 + 1.0 * u1 + 0.2 * u2 * u3,
    }


def coupler_branches(u) -> dict:
    u0, u1, u2 = u
    return {
        ("coupler", None): 55.0 + 25.0 * u0,
        ("coupler", "pad"): 6.0 + 10.0 * u1 + 2.0 * u2 + 1.0 * u1 * u2,
        ("pad", None): 30.0 + 20.0 * u2 + 5.0 * u1,
    }


@dataclass(frozen=True)
class SyntheticElement:
    """Ground-truth capacitance generator standing in for field simulation."""

    name: str
    dim_names: tuple
    low: np.ndarray
    high: np.ndarray
    nodes: tuple
    branches: callable

    def matrix(self, dims) -> np.ndarray:
        u = (np.asarray(dims, dtype=float) - self.low) / (self.high - self.low)
        return _maxwell(self.nodes, self.branches(u))

    def lut(self, perturbation: float = 0.0, seed: int = 0) -> GeometryLUT:
        """Sample the corners; each branch is scaled by 1 + U(-p, p)."""
        rng = np.random.default_rng(seed)
        n = len(self.dim_names)
        corners = []
        for c in range(2 ** n):
            u = np.array([(c >> k) & 1 for k in range(n)], dtype=float)
            br = self.branches(u)
            if perturbation:
                br = {key: v * (1.0 + rng.uniform(-perturbation, perturbation)) for key, v in br.items()}
            corners.append(_maxwell(self.nodes, br))
        return GeometryLUT(self.name, self.dim_names, self.low, self.high, self.nodes,
                           np.array(corners))


SYNTHETIC_TRANSMON = SyntheticElement("transmon", TRANSMON_DIMS, TRANSMON_LOW, TRANSMON_HIGH,
                                      TRANSMON_NODES, transmon_branches)
SYNTHETIC_COUPLER = SyntheticElement("coupler", COUPLER_DIMS, COUPLER_LOW, COUPLER_HIGH,
                                     COUPLER_NODES, coupler_branches)


def pair_node_names(i: str = "Qi", j: str = "Qj", coupler: str = "C", pad: str = "P"):
    """Local -> global node maps for transmon i, coupler, transmon j."""
    return ({"island": i, "coupler": coupler, "pad": pad},
            {"coupler": coupler, "pad": pad},
            {"island": j, "coupler": coupler, "pad": pad})


def synthetic_device_matrix(dims_i, dims_c, dims_j, unaccounted: float = 0.0) -> AssembledCapacitance:
    """Directly constructed full matrix of a transmon-coupler-transmon cell.

    ``unaccounted`` adds capacitance (fF) from each transmon island to the
    part of the coupler pad lying outside its pocket, a coupling no single
    element table can see.
    """
    names = pair_node_names()
    nodes = ("Qi", "C", "P", "Qj")
    total = np.zeros((4, 4))
    for elem, dims, nm in ((SYNTHETIC_TRANSMON, dims_i, names[0]),
                           (SYNTHETIC_COUPLER, dims_c, names[1]),
                           (SYNTHETIC_TRANSMON, dims_j, names[2])):
        u = (np.asarray(dims, dtype=float) - elem.low) / (elem.high - elem.low)
        br = {(nm[a], None if b is None else nm[b]): v for (a, b), v in elem.branches(u).items()}
        total += _maxwell(nodes, br)
    if unaccounted:
        total += _maxwell(nodes, {("Qi", "P"): unaccounted, ("Qj", "P"): unaccounted})
    return AssembledCapacitance(total, nodes, ("synthetic",))


# ---------------------------------------------------------------------------
# forward map and design search
# ---------------------------------------------------------------------------

DEFAULT_JOSEPHSON = {"qubit": 14.1, "coupler": 21.4}   # GHz


@dataclass
class CellDesign:
    g_qq: float     # MHz
    g_qc: float     # MHz
    e_c_qubit: float  # GHz
    e_c_coupler: float


def forward_map(transmon_lut: GeometryLUT, coupler_lut: GeometryLUT, dims_t, dims_c,
                josephson: dict | None = None, normalized: bool = False) -> CellDesign:
    """Couplings of a symmetric cell (both transmons share ``dims_t``)."""
    josephson = josephson or DEFAULT_JOSEPHSON
    if normalized:
        mt = interpolate_normalized(transmon_lut, dims_t)
        mc = interpolate_normalized(coupler_lut, dims_c)
    else:
        mt = interpolate(transmon_lut, dims_t)
        mc = interpolate(coupler_lut, dims_c)
    ni, nc, nj = pair_node_names()
    rename = lambda lut, nm: tuple(nm[n] for n in lut.nodes)  # noqa: E731
    cap = assemble(Block(mt, rename(transmon_lut, ni)), Block(mc, rename(coupler_lut, nc)),
                   Block(mt, rename(transmon_lut, nj)))
    ej = {"Qi": josephson["qubit"], "C": josephson["coupler"], "Qj": josephson["qubit"]}
    en = energies_from_capacitance(cap, ej)
    q = (ej["Qi"], en.e_c["Qi"])
    c = (ej["C"], en.e_c["C"])
    g = coupling_strengths(en.coupling("Qi", "Qj"), en.coupling("Qi", "C"), q, q, c)
    return CellDesign(g["g_qq"], g["g_qc"], en.e_c["Qi"], en.e_c["C"])


_TARGET_KEYS = ("g_qq", "g_qc", "E_C")


def _design_vector(d: CellDesign, keys):
    table = {"g_qq": d.g_qq, "g_qc": d.g_qc, "E_C": d.e_c_qubit}
    return np.array([table[k] for k in keys])


@dataclass
class DesignResult:
    transmon_dims: np.ndarray
    coupler_dims: np.ndarray
    achieved: dict
    residuals: dict      # relative
    iterations: int

    @property
    def max_residual(self) -> float:
        return max(abs(v) for v in self.residuals.values())


def design_search(targets: dict, transmon_lut: GeometryLUT, coupler_lut: GeometryLUT,
                  josephson: dict | None = None, start=None, max_iter: int = 200,
                  tolerance: float = 1e-3) -> DesignResult:
    """Find geometry dimensions whose forward map hits ``targets``.

    ``targets`` may contain ``g_qq`` and ``g_qc`` (MHz) and ``E_C`` (GHz,
    qubit charging energy).  A damped Gauss-Newton iteration with
    minimum-norm steps runs in the unit box of normalised dimensions.
    Before searching, every target is checked against the range spanned by
    the forward map at all corners of the joint box.
    """
    keys = [k for k in _TARGET_KEYS if k in targets]
    unknown = set(targets) - set(_TARGET_KEYS)
    if unknown or not keys:
        raise ValidationError(f"targets must be a subset of {_TARGET_KEYS}")
    goal = np.array([float(targets[k]) for k in keys])
    if np.any(goal <= 0):
        raise ValidationError("targets must be positive")
    nt, nc = transmon_lut.n_dims, coupler_lut.n_dims

    def f(x):
        return _design_vector(forward_map(transmon_lut, coupler_lut, x[:nt], x[nt:], josephson,
                                          normalized=True), keys)

    corners = np.array([f(np.array([(c >> k) & 1 for k in range(nt + nc)], dtype=float))
                        for c in range(2 ** (nt + nc))])
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    for k, key in enumerate(keys):
        if not lo[k] <= goal[k] <= hi[k]:
            raise Unreachable(f"target {key}={goal[k]:g} outside the attainable range "
                              f"[{lo[k]:g}, {hi[k]:g}] of the LUT box")

    x = np.full(nt + nc, 0.5) if start is None else np.concatenate(
        [transmon_lut.normalize(start[0]), coupler_lut.normalize(start[1])])
    r = f(x) / goal - 1.0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(r)) < tolerance:
            break
        jac = np.empty((len(keys), x.size))
        h = 1e-6
        for k in range(x.size):
            xp = x.copy()
            xp[k] = xp[k] + h if xp[k] + h <= 1 else xp[k] - h
            jac[:, k] = (f(xp) / goal - 1.0 - r) / (xp[k] - x[k])
        step = np.linalg.lstsq(jac, -r, rcond=None)[0]
        lam = 1.0
        while lam > 1e-4:
            xn = np.clip(x + lam * step, 0.0, 1.0)
            rn = f(xn) / goal - 1.0
            if np.linalg.norm(rn) < np.linalg.norm(r):
                break
            lam *= 0.5
        else:
            # stuck against the box: freeze saturated coordinates and retry once
            free = (x > 1e-9) & (x < 1 - 1e-9)
            if not free.any():
                raise NonConvergence("design search stalled on the box boundary")
            step = np.zeros_like(x)
            step[free] = np.linalg.lstsq(jac[:, free], -r, rcond=None)[0]
            xn = np.clip(x + 0.5 * step, 0.0, 1.0)
            rn = f(xn) / goal - 1.0
            if np.linalg.norm(rn) >= np.linalg.norm(r):
                raise NonConvergence("design search made no progress")
        x, r = xn, rn
    else:
        if np.max(np.abs(r)) >= tolerance:
            raise NonConvergence(f"no convergence after {max_iter} iterations "
                                 f"(max residual {np.max(np.abs(r)):.3g})")
        it = max_iter
    d = forward_map(transmon_lut, coupler_lut, x[:nt], x[nt:], josephson, normalized=True)
    ach = dict(zip(keys, _design_vector(d, keys)))
    return DesignResult(transmon_lut.denormalize(x[:nt]), coupler_lut.denormalize(x[nt:]),
                        {k: float(v) for k, v in ach.items()},
                        {k: float(ach[k] / targets[k] - 1.0) for k in keys}, it)


# ---------------------------------------------------------------------------
# LUT files
# ---------------------------------------------------------------------------

def lut_to_text(lut: GeometryLUT) -> str:
    lines = [f"[lut {lut.name}]",
             "dims = " + ", ".join(lut.dim_names),
             "low = " + ", ".join(repr(float(v)) for v in lut.corner_low) + " um",
             "high = " + ", ".join(repr(float(v)) for v in lut.corner_high) + " um",
             "nodes = " + ", ".join(lut.nodes), ""]
    for c, m in enumerate(lut.corners):
        bits = "".join(str((c >> k) & 1) for k in range(lut.n_dims))
        lines.append(f"[corner {bits}]")
        lines.append("matrix = " + ", ".join(repr(float(v)) for v in m.ravel()) + " fF")
    return "\n".join(lines) + "\n"


def lut_from_document(doc: Document) -> GeometryLUT:
    head = doc.one("lut")
    head.check_keys({"dims", "low", "high", "nodes"})
    names = [s.strip() for s in head["dims"].text().split(",") if s.strip()]
    nodes = [s.strip() for s in head["nodes"].text().split(",") if s.strip()]
    lo = head["low"].numbers("um")
    hi = head["high"].numbers("um")
    n, k = len(names), len(nodes)
    found = {}
    for sec in doc.of_kind("corner"):
        bits = sec.name or ""
        if len(bits) != n or set(bits) - {"0", "1"}:
            raise sec.error(f"corner name must be {n} binary digits")
        idx = sum(int(b) << j for j, b in enumerate(bits))
        if idx in found:
            raise sec.error(f"duplicate corner {bits}")
        sec.check_keys({"matrix"})
        vals = sec["matrix"].numbers("fF")
        if len(vals) != k * k:
            raise sec["matrix"].error(f"expected {k * k} entries")
        found[idx] = np.array(vals).reshape(k, k)
    if len(found) != 2 ** n:
        raise ValidationError(f"LUT {head.name}: {len(found)} corners given, {2 ** n} required",
                              source=doc.source)
    return GeometryLUT(head.name or "lut", names, lo, hi, nodes,
                       np.array([found[i] for i in range(2 ** n)]))


def load_lut(path) -> GeometryLUT:
    return lut_from_document(parse_file(path))


def lut_from_text(text: str) -> GeometryLUT:
    return lut_from_document(parse_text(text))


def save_lut(lut: GeometryLUT, path):
    Path(path).write_text(lut_to_text(lut))
