import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from couplersim.device import DeviceGraph, EdgeCoupling, ModeSpec, reference_device

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(scope="session")
def device():
    return reference_device()


def pair_graph(f_a=5.0, f_b=5.1, g_qq=2.0, g_qc=1e-6, f_c=9.0, alpha=-250.0, levels=3):
    """Two transmons joined by a coupler parked far away (tiny g_qc)."""
    modes = (ModeSpec("A", "transmon", f_a, alpha, n_levels=levels),
             ModeSpec("B", "transmon", f_b, alpha, n_levels=levels),
             ModeSpec("C", "coupler", f_c, -100.0, n_levels=2))
    return DeviceGraph(modes, (EdgeCoupling("A", "B", "C", g_qq, g_qc, g_qc),))


@pytest.fixture
def make_pair():
    return pair_graph


ACCEPTANCE: dict = {}


@pytest.fixture
def verdict():
    """Record one pass/fail line per acceptance criterion."""
    def record(number: int, title: str, checks: dict):
        ok = all(v[0] for v in checks.values())
        parts = "; ".join(f"{k}={'ok' if v[0] else 'FAIL'} ({v[1]})" for k, v in checks.items())
        line = f"criterion {number} [{title}]: {'PASS' if ok else 'FAIL'} :: {parts}"
        ACCEPTANCE[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
