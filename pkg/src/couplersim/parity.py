"""Monte Carlo of repeated weight-2 X-parity checks with a spectator qubit.

Every shot tracks three bits per round: the data X-parity, the ancilla
outcome flips accumulated during the round, and a leaked flag for the
ancilla.  Coherent ZZ kicks from the spectator enter as outcome-flip
probabilities sin^2(phi/2).  All shots run as numpy vectors.
"""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ValidationError

TOGGLE_MODES = ("every_round", "odd_rounds_detuning")
CHUNK = 25_000          # shots per independent random stream


@dataclass(frozen=True)
class ErrorChannelSet:
    """Per-operation error model of one parity round.

    Probabilities are per operation; ``xi_zz_spectator`` in kHz,
    ``t_exposure`` and ``t_cz`` in ns.  ``p_data_idle`` is the parity-flip
    probability of the data pair while the ancilla is read out and
    ``leak_zz_coeff`` the extra ancilla leakage per round, per MHz^2 of
    spectator ZZ, on rounds with the spectator excited.
    """

    p1: float = 0.0
    p2: float = 0.0
    L1_cz: float = 0.0
    eps_ro: float = 0.0
    p_leak_meas: float = 0.0
    seepage: float = 0.0
    xi_zz_spectator: float = 0.0
    j2_exchange_prob: float = 0.0
    t_exposure: float = 120.0
    p_data_idle: float = 0.0
    leak_zz_coeff: float = 0.0
    t_cz: float = 60.0

    def __post_init__(self):
        for name in ("p1", "p2", "L1_cz", "eps_ro", "p_leak_meas", "seepage",
                     "j2_exchange_prob", "p_data_idle"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        for name in ("t_exposure", "leak_zz_coeff", "t_cz"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")

    def spectator_leakage(self) -> float:
        return min(1.0, self.leak_zz_coeff * (self.xi_zz_spectator * 1e-3) ** 2)

    def round_leakage(self, spectator_excited: bool) -> float:
        keep = (1 - self.L1_cz) ** 2 * (1 - self.p_leak_meas)
        if spectator_excited:
            keep *= 1 - self.spectator_leakage()
        return 1.0 - keep


def kick_flip_probability(phi: float) -> float:
    return float(np.sin(phi / 2.0) ** 2)


def reference_error_channels(**overrides) -> ErrorChannelSet:
    """Error channels built from the standalone device characterisation.

    Gate errors and leakage are the measured single-qubit (ancilla) and CZ
    values of the two data couplings, readout error is the ancilla value
    at the J1 null, data idling uses T2_echo of the data qubits over the
    800 ns readout window, and seepage assumes |2> decays at 2/T1.
    """
    t_ro = 0.8  # us
    idle = [0.5 * (1 - np.exp(-t_ro / t2)) for t2 in (70.0, 95.9)]
    p_idle = idle[0] * (1 - idle[1]) + idle[1] * (1 - idle[0])
    base = dict(p1=0.00056, p2=0.5 * (0.0049 + 0.0061), L1_cz=0.5 * (0.00005 + 0.00053),
                eps_ro=0.008, p_leak_meas=0.0001, seepage=1 - np.exp(-2 * 1.1 / 31.5),
                p_data_idle=float(p_idle), leak_zz_coeff=0.02)
    base.update(overrides)
    return ErrorChannelSet(**base)


@dataclass(frozen=True)
class ParityExperiment:
    data_qubits: tuple = ("Q1", "Q2")
    ancilla: str = "Q0"
    spectator: str = "Q4"
    n_rounds: int = 100
    n_shots: int = 100_000
    toggle_spectator: bool = False
    toggle_parity: str = "every_round"
    ancilla_detuning: float = 0.0   # MHz, odd_rounds_detuning mode
    coupler_bias: float | None = None
    error_params: ErrorChannelSet = field(default_factory=ErrorChannelSet)
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 2:
            raise ValidationError("n_rounds must be at least 2")
        if self.n_shots < 1:
            raise ValidationError("n_shots must be at least 1")
        if self.toggle_parity not in TOGGLE_MODES:
            raise ValidationError(f"toggle_parity must be one of {TOGGLE_MODES}")
        if len(self.data_qubits) != 2:
            raise ValidationError("a weight-2 check needs two data qubits")

    def with_errors(self, **kw) -> "ParityExperiment":
        return replace(self, error_params=replace(self.error_params, **kw))


@dataclass
class ParityRunResult:
    outcomes: np.ndarray          # (shots, rounds) uint8
    defect_rate: np.ndarray       # (rounds,), nan at round 1
    leak_population: np.ndarray   # (rounds,)
    meta: dict = field(default_factory=dict)

    @property
    def n_shots(self) -> int:
        return self.outcomes.shape[0]

    def defect_at(self, round_number: int) -> float:
        if round_number < 2:
            raise ValidationError("defects start at round 2")
        return float(self.defect_rate[round_number - 1])

    def defect_stderr(self, round_number: int) -> float:
        d = self.defect_at(round_number)
        return float(np.sqrt(max(d * (1 - d), 1e-12) / self.n_shots))

    def slope(self, first: int = 2, last: int | None = None) -> float:
        """Least-squares defect-rate slope per round over [first, last]."""
        last = last or len(self.defect_rate)
        r = np.arange(first, last + 1)
        return float(np.polyfit(r, self.defect_rate[first - 1:last], 1)[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("round,defect_rate,leak_population\n")
        for k, (d, lp) in enumerate(zip(self.defect_rate, self.leak_population), start=1):
            buf.write(f"{k},{'' if np.isnan(d) else repr(float(d))},{float(lp)!r}\n")
        return buf.getvalue()

    def summary(self) -> dict:
        n = len(self.defect_rate)
        return {"n_shots": self.n_shots, "n_rounds": n,
                "final_defect_rate": self.defect_at(n),
                "mean_defect_rate": float(np.nanmean(self.defect_rate)),
                "final_leak_population": float(self.leak_population[-1]),
                "slope_per_round": self.slope(), **self.meta}


def _round_flags(exp: ParityExperiment, r: int):
    """(spectator excited, ancilla detuning phase) for round r (1-based)."""
    if exp.toggle_parity == "every_round":
        return exp.toggle_spectator and r % 2 == 1, 0.0
    odd = r % 2 == 1
    ep = exp.error_params
    phi = 2 * 2 * np.pi * exp.ancilla_detuning * 1e-3 * ep.t_cz if odd else 0.0
    return False, phi


def _simulate(exp: ParityExperiment, n: int, rng: np.random.Generator):
    ep = exp.error_params
    R = exp.n_rounds
    out = np.empty((n, R), dtype=np.uint8)
    leak_pop = np.empty(R)
    parity = rng.random(n) < 0.5
    leaked = np.zeros(n, dtype=bool)
    p_anc_1q = 2.0 / 3.0 * ep.p1
    phi_spec = 2 * np.pi * ep.xi_zz_spectator * 1e-6 * ep.t_exposure
    for r in range(1, R + 1):
        excited, phi_det = _round_flags(exp, r)
        # data parity: idling during readout, 4 data single-qubit gates, CZ errors below
        flip_d = rng.random(n) < ep.p_data_idle
        for _ in range(4):
            flip_d ^= rng.random(n) < p_anc_1q
        flip_a = np.zeros(n, dtype=bool)
        for _ in range(2):
            flip_a ^= rng.random(n) < p_anc_1q
        for _ in range(2):
            hit = rng.random(n) < ep.p2
            pauli = rng.integers(1, 16, size=n)     # two-qubit Pauli, identity excluded
            flip_a ^= hit & (pauli // 4 >= 2)       # Y or Z on the ancilla
            flip_d ^= hit & (pauli % 4 >= 2)        # Y or Z on the data qubit
        if excited and phi_spec:
            flip_a ^= rng.random(n) < kick_flip_probability(phi_spec)
        if phi_det:
            flip_a ^= rng.random(n) < kick_flip_probability(phi_det)
        parity ^= flip_d
        # leakage Markov step
        L = ep.round_leakage(excited)
        u = rng.random(n)
        leaked = np.where(leaked, u >= ep.seepage, u < L)
        bit = parity ^ flip_a
        if excited and ep.j2_exchange_prob:
            bit &= ~(rng.random(n) < ep.j2_exchange_prob)
        bit ^= rng.random(n) < ep.eps_ro
        rand = rng.random(n) < 0.5
        bit = np.where(leaked, rand, bit)
        out[:, r - 1] = bit
        leak_pop[r - 1] = leaked.mean()
    return out, leak_pop * n


def run_parity(exp: ParityExperiment, executor=None) -> ParityRunResult:
    """Simulate ``exp``; identical seeds give identical outcome arrays.

    Shots are split into fixed-size chunks, each with a random stream
    spawned from the seed, so results do not depend on ``executor``.
    """
    sizes = [CHUNK] * (exp.n_shots // CHUNK)
    if exp.n_shots % CHUNK:
        sizes.append(exp.n_shots % CHUNK)
    seqs = np.random.SeedSequence(exp.seed).spawn(len(sizes))
    work = [(exp, s, np.random.default_rng(q)) for s, q in zip(sizes, seqs)]
    mapper = map if executor is None else executor.map
    parts = list(mapper(_chunk, work))
    outcomes = np.concatenate([p[0] for p in parts], axis=0)
    leak = sum(p[1] for p in parts) / exp.n_shots
    defect = np.full(exp.n_rounds, np.nan)
    defect[1:] = np.mean(outcomes[:, 1:] != outcomes[:, :-1], axis=0)
    meta = {"toggle_spectator": exp.toggle_spectator, "toggle_parity": exp.toggle_parity,
            "seed": exp.seed, "coupler_bias_GHz": exp.coupler_bias,
            "xi_zz_kHz": exp.error_params.xi_zz_spectator}
    return ParityRunResult(outcomes, defect, leak, meta)


def _chunk(args):
    exp, n, rng = args
    return _simulate(exp, n, rng)


def markov_leak_population(L: float, s: float, n_rounds: int) -> np.ndarray:
    """p_r for p_{r+1} = p_r (1 - s) + (1 - p_r) L, p_0 = 0, rounds 1..n."""
    p = np.empty(n_rounds)
    prev = 0.0
    for k in range(n_rounds):
        prev = prev * (1 - s) + (1 - prev) * L
        p[k] = prev
    return p


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class BiasCurve:
    bias: np.ndarray
    xi_zz: np.ndarray          # kHz
    j2_prob: np.ndarray
    toggled: np.ndarray        # defect rate at the final round
    untoggled: np.ndarray
    toggled_slope: np.ndarray
    untoggled_slope: np.ndarray
    toggled_rounds: np.ndarray     # (n_bias, n_rounds) defect rate per round
    untoggled_rounds: np.ndarray

    def best_bias(self) -> float:
        return float(self.bias[int(np.argmin(self.toggled))])

    def rounds_csv(self) -> str:
        buf = io.StringIO()
        buf.write("bias_ghz,toggled,round,defect_rate\n")
        for b, on, off in zip(self.bias, self.toggled_rounds, self.untoggled_rounds):
            for flag, curve in ((1, on), (0, off)):
                for k, d in enumerate(curve[1:], start=2):
                    buf.write(f"{float(b)!r},{flag},{k},{float(d)!r}\n")
        return buf.getvalue()

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("bias_ghz,xi_zz_khz,j2_prob,defect_toggled,defect_untoggled,"
                  "slope_toggled,slope_untoggled\n")
        for row in zip(self.bias, self.xi_zz, self.j2_prob, self.toggled, self.untoggled,
                       self.toggled_slope, self.untoggled_slope):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


def _profile_column(profile, name):
    f = np.asarray(profile.coupler_freqs, dtype=float)
    v = np.asarray(getattr(profile, name), dtype=float)
    ok = np.isfinite(v)
    order = np.argsort(f[ok])
    return f[ok][order], v[ok][order]


def defect_rate_vs_bias(template: ParityExperiment, bias_grid, profile, chevron=None,
                        amplitude: float | None = None, executor=None,
                        slope_from: int = 2) -> BiasCurve:
    """Final-round defect rate vs spectator-coupler bias.

    ``profile`` supplies xi_zz(bias).  With ``chevron`` (a two-excitation
    ChevronMap of the ancilla/spectator edge) the J2 exchange probability
    is read at ``amplitude``; otherwise the template value is kept.
    """
    bias_grid = np.asarray(bias_grid, dtype=float)
    f, xi = _profile_column(profile, "xi_zz")
    if bias_grid.min() < f.min() - 1e-12 or bias_grid.max() > f.max() + 1e-12:
        raise ValidationError("bias grid leaves the profile window")
    xi_b = np.interp(bias_grid, f, xi)
    if chevron is not None:
        if amplitude is None:
            raise ValidationError("amplitude is required with a chevron map")
        a_idx = int(np.argmin(np.abs(chevron.amplitudes - amplitude)))
        order = np.argsort(chevron.coupler_freqs)
        j2 = np.interp(bias_grid, chevron.coupler_freqs[order], chevron.transfer[order, a_idx])
    else:
        j2 = np.full(bias_grid.shape, template.error_params.j2_exchange_prob)
    tog, untog, s_tog, s_untog, c_tog, c_untog = [], [], [], [], [], []
    seeds = np.random.SeedSequence(template.seed).generate_state(len(bias_grid))
    for k, (b, x, p) in enumerate(zip(bias_grid, xi_b, j2)):
        base = replace(template, coupler_bias=float(b), seed=int(seeds[k]),
                       toggle_parity="every_round",
                       error_params=replace(template.error_params, xi_zz_spectator=float(x),
                                            j2_exchange_prob=float(p)))
        r_on = run_parity(replace(base, toggle_spectator=True), executor)
        r_off = run_parity(replace(base, toggle_spectator=False), executor)
        tog.append(r_on.defect_at(base.n_rounds))
        untog.append(r_off.defect_at(base.n_rounds))
        s_tog.append(r_on.slope(slope_from))
        s_untog.append(r_off.slope(slope_from))
        c_tog.append(r_on.defect_rate)
        c_untog.append(r_off.defect_rate)
    return BiasCurve(bias_grid, xi_b, np.asarray(j2), np.array(tog), np.array(untog),
                     np.array(s_tog), np.array(s_untog), np.array(c_tog), np.array(c_untog))


def emulated_zz_detuning(template: ParityExperiment, detuning_grid, executor=None) -> dict:
    """Defect curves with the ancilla detuned on odd rounds, keyed by MHz."""
    if template.toggle_parity != "odd_rounds_detuning":
        raise ValidationError("template must use toggle_parity = odd_rounds_detuning")
    return {float(d): run_parity(replace(template, ancilla_detuning=float(d)), executor)
            for d in detuning_grid}


def equivalent_detuning(xi_zz_khz: float, t_exposure: float, t_cz: float) -> float:
    """Ancilla detuning (MHz) whose odd-round phase equals the spectator kick."""
    return xi_zz_khz * 1e-3 * t_exposure / (2 * t_cz)


@dataclass
class AmplitudeSweep:
    amplitudes: np.ndarray
    final_defect: np.ndarray
    slope: np.ndarray
    argmin: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("amplitude,defect_final,slope\n")
        for row in zip(self.amplitudes, self.final_defect, self.slope):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


def readout_amplitude_sweep(template: ParityExperiment, amp_grid, eps_ro_fn, p_leak_fn,
                            executor=None, slope_from: int = 2) -> AmplitudeSweep:
    """Final-round defect rate vs ancilla readout amplitude.

    ``eps_ro_fn`` and ``p_leak_fn`` map amplitude to assignment error and
    measurement-induced leakage.
    """
    amp_grid = np.asarray(amp_grid, dtype=float)
    final, slopes = [], []
    for a in amp_grid:
        exp = template.with_errors(eps_ro=float(eps_ro_fn(a)), p_leak_meas=float(p_leak_fn(a)))
        res = run_parity(exp, executor)
        final.append(res.defect_at(exp.n_rounds))
        slopes.append(res.slope(slope_from))
    final = np.array(final)
    return AmplitudeSweep(amp_grid, final, np.array(slopes), float(amp_grid[int(np.argmin(final))]))


def u_shaped_readout(a_opt: float = 0.5, eps_min: float = 0.008, leak_scale: float = 0.004):
    """Illustrative amplitude dependences: SNR-limited eps_ro, leakage ~ a^4."""
    def eps(a):
        return min(0.5, eps_min * (a_opt / max(a, 1e-6)) ** 2)

    def leak(a):
        return min(1.0, leak_scale * (a / (2 * a_opt)) ** 4)
    return eps, leak


def experiment_json(exp: ParityExperiment) -> str:
    d = asdict(exp)
    return json.dumps(d, indent=2, sort_keys=True)
