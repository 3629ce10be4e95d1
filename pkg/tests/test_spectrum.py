import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import pair_graph
from couplersim.errors import ValidationError
from couplersim.spectrum import (dressed_labeling, exchange_coupling, interaction_profile,
                                 straddling_check, xi_zz)


def second_order_zz(f_a, f_b, alpha, g):
    """ZZ (kHz) from second-order shifts of |11> by |20> and |02>; one-excitation shifts cancel."""
    e11 = f_a + f_b
    e20, e02 = 2 * f_a + alpha, 2 * f_b + alpha
    g = g * 1e-3
    return 2 * g * g * (1 / (e11 - e20) + 1 / (e11 - e02)) * 1e6


@given(st.floats(0.05, 0.2), st.sampled_from([-1, 1]), st.floats(0.5, 3.0))
def test_zz_matches_perturbation_theory(detune, sign, g):
    f_b = 5.0 + sign * detune
    graph = pair_graph(5.0, f_b, g_qq=g)
    x = xi_zz(graph, graph.sweetspots())
    expect = second_order_zz(5.0, f_b, -0.25, g)
    # fourth-order and counter-rotating corrections stay below 1 %
    assert x == pytest.approx(expect, rel=0.01)


def test_zz_vanishes_without_coupling():
    graph = pair_graph(5.0, 5.1, g_qq=0.0)
    assert abs(xi_zz(graph, graph.sweetspots())) < 1e-6


def test_resonant_exchange_equals_direct_coupling():
    graph = pair_graph(5.0, 5.0, g_qq=3.0)
    assert exchange_coupling(graph, graph.sweetspots(), "one_excitation") == pytest.approx(3.0, rel=1e-4)
    # |11> <-> |02> carries the sqrt(2) matrix element
    graph = pair_graph(5.0, 5.25, g_qq=3.0)
    assert exchange_coupling(graph, graph.sweetspots(), "two_excitation") == pytest.approx(
        3.0 * np.sqrt(2), rel=1e-3)


def test_labeling_overlaps(device):
    sub = device.edge_subgraph("Q2-Q0")
    lab = dressed_labeling(sub, sub.sweetspots(), [(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)])
    assert not lab.ambiguous
    assert all(entry.overlap > 0.9 for entry in lab.entries.values())


def test_straddling(device):
    assert straddling_check(device, "Q2-Q0")
    assert not straddling_check(pair_graph(5.0, 5.4), "A-B")


@pytest.fixture(scope="module")
def profile(device):
    fs = device.mode("C02").f_sweetspot
    return interaction_profile(device, "Q2-Q0", (fs - 0.55, fs), 34)


def test_profile_has_three_distinct_nulls(profile):
    nulls = profile.nulls
    assert all(nulls[k].valid for k in ("xi_zz", "j1", "j2"))
    freqs = sorted(nulls[k].frequency for k in nulls)
    assert min(np.diff(freqs)) > 0.02
    # the ZZ null sits highest, furthest from the qubits
    assert profile.null_ordering()[-1] == "xi_zz"


def test_profile_csv_roundtrip(profile):
    lines = profile.to_csv().strip().splitlines()
    assert lines[0].startswith("f_coupler_GHz")
    assert len(lines) == 35


def test_profile_window_validation(device):
    fs = device.mode("C02").f_sweetspot
    with pytest.raises(ValidationError):
        interaction_profile(device, "Q2-Q0", (fs - 0.2, fs + 0.1), 5)
    with pytest.raises(ValidationError):
        interaction_profile(device, "Q2-Q0", (fs, fs - 0.2), 5)


def test_profile_swap_invariant(device):
    """Labelling the pair in either order gives the same interaction curves."""
    fs = device.mode("C02").f_sweetspot
    sub = device.edge_subgraph("Q2-Q0")
    swapped = sub.__class__(sub.modes, (sub.edges[0].swapped(),), sub.noise, sub.direct,
                            sub.name, sub.dimension_cap)
    a = interaction_profile(sub, "Q2-Q0", (fs - 0.4, fs - 0.1), 4)
    b = interaction_profile(swapped, "Q0-Q2", (fs - 0.4, fs - 0.1), 4)
    assert np.allclose(a.xi_zz, b.xi_zz, rtol=1e-9)
    assert np.allclose(np.abs(a.j1), np.abs(b.j1), rtol=1e-6)
