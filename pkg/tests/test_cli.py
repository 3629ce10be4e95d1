import csv
import json

import numpy as np
import pytest

from couplersim.cli import main


def body(path):
    return "".join(l for l in path.read_text().splitlines(True) if not l.startswith("#"))


def run(tmp_path, command, config="", name="out", extra=()):
    cfg = tmp_path / f"{name}.cfg"
    cfg.write_text(config)
    out = tmp_path / name
    code = main([command, "--config", str(cfg), "--out", str(out), "--jobs", "1", *extra])
    return code, out


def test_sweep_reports_three_nulls(tmp_path):
    code, out = run(tmp_path, "sweep-interactions", "[sweep]\nedges = Q1-Q0\nn_points = 24\n")
    assert code == 0
    nulls = json.loads((out / "nulls.json").read_text())["edges"]["Q1-Q0"]["nulls"]
    assert all(nulls[k]["valid"] for k in ("xi_zz", "j1", "j2"))
    head = (out / "profile_Q1-Q0.csv").read_text().splitlines()[:5]
    assert head[0].startswith("# couplersim") and any("config_hash" in h for h in head)
    assert any(h.startswith("# seed 0") for h in head)


def test_sweep_window_outside_arc(tmp_path):
    code, _ = run(tmp_path, "sweep-interactions", "[sweep]\nwindow_high = 9 GHz\n")
    assert code == 2


def test_zero_coupling_warns(tmp_path):
    cfg = "[sweep]\nedges = Q1-Q0\nn_points = 6\ng_qq = 0 MHz\ng_qc = 1e-9 MHz\n"
    with pytest.warns(UserWarning, match="degenerate"):
        code, _ = run(tmp_path, "sweep-interactions", cfg)
    assert code == 0


def test_missing_files_are_validation_errors(tmp_path):
    assert main(["cz", "--device", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == 2
    assert main(["cz", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == 2


def test_cz_validation(tmp_path):
    assert run(tmp_path, "cz", "[cz]\nt_p = 0 ns\n")[0] == 2
    assert run(tmp_path, "cz", "[cz]\nedge = Q9-Q0\n", "bad")[0] == 2


def test_lut_design(tmp_path):
    code, out = run(tmp_path, "lut-design", "[lut]\nself_test = yes\n")
    assert code == 0
    res = json.loads((out / "lut_design.json").read_text())
    assert res["self_test"]["pass"]
    assert max(abs(v) for v in res["residuals"].values()) <= 0.01
    assert run(tmp_path, "lut-design", "[lut]\ng_qq = 500 MHz\n", "u")[0] == 3


def test_readout_amplitude_zero_column(tmp_path):
    cfg = "[readout]\nedge = Q3-Q0\nn_coupler = 3\nn_amp = 3\nprofile_points = 20\n"
    code, out = run(tmp_path, "readout-exchange", cfg)
    assert code == 0
    rows = list(csv.DictReader(body(out / "chevron_Q3-Q0_one_excitation.csv").splitlines()))
    assert all(float(r["transfer"]) < 1e-9 for r in rows if float(r["amplitude"]) == 0.0)


@pytest.mark.parametrize("mode", ["single", "detuning"])
def test_parity_repeatable(tmp_path, mode):
    cfg = f"[parity]\nmode = {mode}\nn_shots = 3000\nn_rounds = 12\ndetunings = 0, 1 MHz\n"
    c1, o1 = run(tmp_path, "parity", cfg, "a", ("--seed", "5"))
    c2, o2 = run(tmp_path, "parity", cfg, "b", ("--seed", "5"))
    assert c1 == c2 == 0
    files = sorted(p.name for p in o1.glob("*.csv"))
    assert files
    for name in files:
        assert body(o1 / name) == body(o2 / name)
    c3, o3 = run(tmp_path, "parity", cfg, "c", ("--seed", "6"))
    assert any(body(o1 / n) != body(o3 / n) for n in files)


def test_bad_parity_mode(tmp_path):
    assert run(tmp_path, "parity", "[parity]\nmode = nonsense\n")[0] == 2
