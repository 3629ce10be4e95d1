"""Command-line entry point: ``couplersim <subcommand> [options]``.

Each subcommand reads an optional experiment file (same sectioned format
as device files), runs one experiment and writes CSV/JSON files into
``--out``.  Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import Document, parse_file, parse_text
from .device import device_from_text, reference_device_text
from .errors import NumericalError, ValidationError

log = logging.getLogger("couplersim")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
SECTION = {"sweep-interactions": "sweep", "cz": "cz", "readout-exchange": "readout",
           "parity": "parity", "lut-design": "lut"}


class Run:
    """Resolved inputs of one invocation plus output helpers."""

    def __init__(self, args):
        self.command = args.command
        self.seed = args.seed
        self.jobs = args.jobs or os.cpu_count() or 1
        self.out = Path(args.out)
        if args.device:
            dev = Path(args.device)
            if not dev.is_file():
                raise ValidationError(f"device file {dev} does not exist")
            self.device_text = dev.read_text()
            self.device_source = str(dev)
        else:
            self.device_text = reference_device_text()
            self.device_source = "<packaged starfish device>"
        if args.config:
            cfg = Path(args.config)
            if not cfg.is_file():
                raise ValidationError(f"config file {cfg} does not exist")
            self.doc = parse_file(cfg)
        else:
            self.doc = parse_text("", source="<defaults>")
        self.section = self.doc.one(SECTION[self.command], required=False)
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ValidationError(f"cannot create output directory {self.out}: {exc}") from None
        if not os.access(self.out, os.W_OK):
            raise ValidationError(f"output directory {self.out} is not writable")
        h = hashlib.sha256()
        for part in (self.command, self.device_text, self.doc.text, str(self.seed)):
            h.update(part.encode())
            h.update(b"\0")
        self.config_hash = h.hexdigest()[:16]
        self.written: list[str] = []

    # parameters -------------------------------------------------------
    def _entry(self, key):
        return self.section.get(key) if self.section is not None else None

    def num(self, key, default, unit=None):
        e = self._entry(key)
        return default if e is None else e.number(unit)

    def int(self, key, default):
        e = self._entry(key)
        return default if e is None else e.integer()

    def nums(self, key, default, unit=None):
        e = self._entry(key)
        return list(default) if e is None else e.numbers(unit)

    def text(self, key, default):
        e = self._entry(key)
        return default if e is None else e.text()

    def flag(self, key, default):
        e = self._entry(key)
        return default if e is None else e.boolean()

    def device(self, **overrides):
        return device_from_text(self.device_text, **overrides)

    def executor(self):
        return ThreadPoolExecutor(self.jobs) if self.jobs > 1 else None

    # outputs ----------------------------------------------------------
    def header(self) -> str:
        stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        return (f"# couplersim {__version__} {self.command}\n# config_hash {self.config_hash}\n"
                f"# seed {self.seed}\n# device {self.device_source}\n# created {stamp}\n")

    def write_csv(self, name, body: str):
        path = self.out / name
        path.write_text(self.header() + body)
        self.written.append(str(path))

    def write_json(self, name, payload: dict):
        meta = {"version": __version__, "command": self.command,
                "config_hash": self.config_hash, "seed": self.seed}
        path = self.out / name
        path.write_text(json.dumps({"meta": meta, **payload}, indent=2, sort_keys=True,
                                   default=_jsonable) + "\n")
        self.written.append(str(path))


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return None
    raise TypeError(f"not serialisable: {type(x)}")


def _window(run: Run, graph, coupler):
    fs = graph.mode(coupler).f_sweetspot
    lo = run.num("window_low", fs - 0.55, "GHz")
    hi = run.num("window_high", fs, "GHz")
    return lo, hi


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_sweep_interactions(run: Run):
    from .spectrum import interaction_profile
    g = run.device(g_qq=run.num("g_qq", None, "MHz"), g_qc=run.num("g_qc", None, "MHz"))
    edges = run.text("edges", "all")
    names = [e.name for e in g.edges] if edges == "all" else edges.replace(",", " ").split()
    n_points = run.int("n_points", 66)
    summary = {}
    with _maybe(run.executor()) as ex:
        for name in names:
            e = g.edge(name)
            prof = interaction_profile(g, e, _window(run, g, e.coupler), n_points, executor=ex)
            flat = [k for k, n in prof.nulls.items() if n.degenerate]
            if flat:
                warnings.warn(f"{e.name}: {', '.join(flat)} vanish across the window; "
                              "nulls are degenerate")
            run.write_csv(f"profile_{e.name}.csv", prof.to_csv())
            summary[e.name] = prof.summary()
    run.write_json("nulls.json", {"edges": summary})


def cmd_cz(run: Run):
    from .dynamics.cz import CZSetup, calibrate_cz, cz_landscape, gate_error_and_leakage
    g = run.device()
    edge = run.text("edge", "Q2-Q0")
    t_p = run.num("t_p", 60.0, "ns")
    if not t_p > 0:
        raise ValidationError("t_p must be positive")
    mode = run.text("mode", "calibrate")
    setup = CZSetup.create(g, edge, coupler_idle=run.num("coupler_idle", None, "GHz"))
    if mode == "landscape":
        thetas = np.linspace(run.num("theta_low", 0.2), run.num("theta_high", 1.0),
                             run.int("n_theta", 41))
        dets = np.linspace(run.num("detuning_low", 0.0, "MHz"),
                           run.num("detuning_high", 60.0, "MHz"), run.int("n_detuning", 41))
        with _maybe(run.executor()) as ex:
            land = cz_landscape(setup, thetas, dets, t_p, executor=ex)
        run.write_csv(f"cz_landscape_{setup.edge.name}.csv", land.to_csv())
        return
    if mode != "calibrate":
        raise ValidationError(f"cz mode must be 'calibrate' or 'landscape', got {mode!r}")
    cal = calibrate_cz(setup, t_p, low_detuning_mhz=run.num("low_detuning", 0.0, "MHz"))
    wf = setup.waveforms(cal.spec, cal.low_detuning_mhz)
    out = cal.summary()
    out["coherent"] = gate_error_and_leakage(setup.channel(wf))
    if run.flag("noise", True):
        out["noisy"] = gate_error_and_leakage(setup.channel(wf, True))
    body = "theta_f_rad,conditional_phase_deg\n" + "".join(
        f"{t:.17g},{p:.17g}\n" for t, p in zip(cal.scan_theta, cal.scan_phase))
    run.write_csv(f"cz_scan_{setup.edge.name}.csv", body)
    run.write_json(f"cz_{setup.edge.name}.json", out)


def cmd_readout_exchange(run: Run):
    from .dynamics.readout import ReadoutModel, readout_stark_chevron
    from .spectrum import interaction_profile
    g = run.device()
    e = g.edge(run.text("edge", "Q3-Q0"))
    manifold = run.text("manifold", "one_excitation")
    lo, hi = _window(run, g, e.coupler)
    freqs = np.linspace(lo, hi, run.int("n_coupler", 41))
    amps = np.linspace(0.0, run.num("amp_max", 1.5), run.int("n_amp", 31))
    model = ReadoutModel(chi=run.num("chi", -1.0, "MHz"), kappa=run.num("kappa", 2.0, "MHz"),
                         duration=run.num("duration", 452.0, "ns"),
                         ring_down=run.num("ring_down", 300.0, "ns"),
                         n_max=run.num("n_max", 60.0),
                         dephasing_scale=run.num("dephasing_scale", 1.0))
    with _maybe(run.executor()) as ex:
        chev = readout_stark_chevron(g, e, freqs, amps, model, manifold,
                                     measured=run.text("measured", None), executor=ex)
    prof = interaction_profile(g, e, (lo, hi), run.int("profile_points", 66))
    key = "j1" if manifold == "one_excitation" else "j2"
    null = prof.nulls[key]
    run.write_csv(f"chevron_{e.name}_{manifold}.csv", chev.to_csv())
    payload = {"manifold": manifold, "edge": e.name, **chev.meta,
               "null": {"name": key, "frequency_GHz": null.frequency, "valid": null.valid}}
    if null.valid:
        payload["max_transfer_at_null"] = float(np.max(chev.column(null.frequency)))
    payload["readout_model"] = asdict(model)
    run.write_json(f"chevron_{e.name}_{manifold}.json", payload)


def _error_channels(run: Run):
    from .parity import reference_error_channels
    over = {}
    for key in ("p1", "p2", "L1_cz", "eps_ro", "p_leak_meas", "seepage", "p_data_idle",
                "leak_zz_coeff", "j2_exchange_prob"):
        if run._entry(key) is not None:
            over[key] = run.num(key, None)
    for key in ("t_exposure", "t_cz"):
        if run._entry(key) is not None:
            over[key] = run.num(key, None, "ns")
    if run._entry("xi_zz") is not None:
        over["xi_zz_spectator"] = run.num("xi_zz", None, "kHz")
    return reference_error_channels(**over)


def cmd_parity(run: Run):
    from . import parity as pm
    mode = run.text("mode", "bias")
    spectator = run.text("spectator", "Q4")
    base = pm.ParityExperiment(
        data_qubits=tuple(run.text("data_qubits", "Q1 Q2").replace(",", " ").split()),
        ancilla=run.text("ancilla", "Q0"), spectator=spectator,
        n_rounds=run.int("n_rounds", 100), n_shots=run.int("n_shots", 100_000),
        toggle_spectator=run.flag("toggle_spectator", True),
        error_params=_error_channels(run), seed=run.seed)
    with _maybe(run.executor()) as ex:
        if mode == "single":
            res = pm.run_parity(base, ex)
            run.write_csv("parity_rounds.csv", res.to_csv())
            run.write_json("parity_summary.json", {"summary": res.summary()})
        elif mode == "bias":
            _parity_bias(run, base, ex)
        elif mode == "detuning":
            tmpl = pm.replace(base, toggle_parity="odd_rounds_detuning", toggle_spectator=False)
            grid = run.nums("detunings", [0.0, 0.25, 0.5, 1.0, 2.0], "MHz")
            curves = pm.emulated_zz_detuning(tmpl, grid, ex)
            lines = ["detuning_mhz,round,defect_rate,leak_population"]
            for d, res in curves.items():
                lines += [f"{d:.17g},{k},{float(res.defect_rate[k - 1])!r},"
                          f"{float(res.leak_population[k - 1])!r}"
                          for k in range(2, base.n_rounds + 1)]
            run.write_csv("parity_detuning.csv", "\n".join(lines) + "\n")
            run.write_json("parity_detuning.json", {
                "final_defect": {str(d): r.defect_at(base.n_rounds) for d, r in curves.items()}})
        elif mode == "amplitude":
            eps, leak = pm.u_shaped_readout(run.num("amp_opt", 0.5), run.num("eps_min", 0.008),
                                            run.num("leak_scale", 0.004))
            grid = run.nums("amplitudes", np.linspace(0.2, 1.2, 11))
            sweep = pm.readout_amplitude_sweep(pm.replace(base, toggle_spectator=False),
                                               grid, eps, leak, ex)
            run.write_csv("parity_amplitude.csv", sweep.to_csv())
            run.write_json("parity_amplitude.json", {"argmin_amplitude": sweep.argmin})
        else:
            raise ValidationError(f"unknown parity mode {mode!r}")


def _parity_bias(run: Run, base, ex):
    from .dynamics.readout import ReadoutModel, readout_stark_chevron
    from .parity import defect_rate_vs_bias
    from .spectrum import interaction_profile
    g = run.device()
    e = g.edge((base.spectator, base.ancilla))
    lo, hi = _window(run, g, e.coupler)
    prof = interaction_profile(g, e, (lo, hi), run.int("profile_points", 66), executor=ex)
    grid = np.linspace(lo, hi, run.int("n_bias", 21))
    chev, amp = None, None
    if run.flag("j2_exchange", True):
        amp = run.num("readout_amplitude", 0.5)
        chev = readout_stark_chevron(g, e, grid, np.array([amp]), ReadoutModel(),
                                     "two_excitation", measured=base.ancilla, executor=ex)
    curve = defect_rate_vs_bias(base, grid, prof, chev, amp, ex)
    run.write_csv(f"parity_bias_{e.name}.csv", curve.to_csv())
    run.write_csv(f"parity_bias_rounds_{e.name}.csv", curve.rounds_csv())
    run.write_json(f"parity_bias_{e.name}.json", {
        "best_bias_GHz": curve.best_bias(), "xi_null_GHz": prof.nulls["xi_zz"].frequency,
        "error_channels": asdict(base.error_params)})


def cmd_lut_design(run: Run):
    from . import captable as ct
    if run._entry("transmon_lut") is not None:
        t_lut = ct.load_lut(run.text("transmon_lut", None))
        c_lut = ct.load_lut(run.text("coupler_lut", None))
    else:
        pert = run.num("perturbation", 0.0)
        t_lut = ct.SYNTHETIC_TRANSMON.lut(pert, run.seed)
        c_lut = ct.SYNTHETIC_COUPLER.lut(pert, run.seed + 1)
    payload = {}
    if run.flag("self_test", False):
        worst = 0.0
        for lut in (t_lut, c_lut):
            for k in range(len(lut.corners)):
                worst = max(worst, float(np.max(np.abs(
                    ct.interpolate(lut, lut.corner_dims(k)) - lut.corners[k]))))
        payload["self_test"] = {"corner_max_abs_error_fF": worst, "pass": worst < 1e-12}
    targets = {"g_qq": run.num("g_qq", 6.0, "MHz"), "g_qc": run.num("g_qc", 70.0, "MHz")}
    if run._entry("E_C") is not None:
        targets["E_C"] = run.num("E_C", None, "GHz")
    res = ct.design_search(targets, t_lut, c_lut)
    body = "element,dimension,value_um\n" + "".join(
        f"transmon,{n},{v:.17g}\n" for n, v in zip(t_lut.dim_names, res.transmon_dims)) + "".join(
        f"coupler,{n},{v:.17g}\n" for n, v in zip(c_lut.dim_names, res.coupler_dims))
    run.write_csv("lut_design.csv", body)
    payload.update(targets=targets, achieved=res.achieved, residuals=res.residuals,
                   iterations=res.iterations)
    run.write_json("lut_design.json", payload)


COMMANDS = {"sweep-interactions": cmd_sweep_interactions, "cz": cmd_cz,
            "readout-exchange": cmd_readout_exchange, "parity": cmd_parity,
            "lut-design": cmd_lut_design}


class _maybe:
    """Context manager that tolerates a ``None`` executor."""

    def __init__(self, ex):
        self.ex = ex

    def __enter__(self):
        return self.ex

    def __exit__(self, *exc):
        if self.ex is not None:
            self.ex.shutdown()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="couplersim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"couplersim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--device", help="device file (default: packaged starfish device)")
        s.add_argument("--config", help="experiment file")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--jobs", type=int, default=0, help="worker threads (0 = all cores)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        run = Run(args)
        COMMANDS[args.command](run)
    except ValidationError as exc:
        print(f"couplersim: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"couplersim: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for path in run.written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
