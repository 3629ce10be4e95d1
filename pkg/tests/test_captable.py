import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from couplersim import captable as ct
from couplersim.errors import LabelMismatch, OutOfRange, SingularMatrix, Unreachable, ValidationError

T_LUT = ct.SYNTHETIC_TRANSMON.lut()
C_LUT = ct.SYNTHETIC_COUPLER.lut()
MID_T = 0.5 * (ct.TRANSMON_LOW + ct.TRANSMON_HIGH)
MID_C = 0.5 * (ct.COUPLER_LOW + ct.COUPLER_HIGH)


def test_corner_exactness():
    for lut in (T_LUT, C_LUT):
        for k in range(len(lut.corners)):
            assert np.array_equal(ct.interpolate(lut, lut.corner_dims(k)), lut.corners[k])


@given(st.lists(st.floats(0, 1), min_size=7, max_size=7))
def test_multilinear_exactness(u):
    """The synthetic generator is multilinear, so interpolation reproduces it."""
    dims = ct.TRANSMON_LOW + np.array(u) * (ct.TRANSMON_HIGH - ct.TRANSMON_LOW)
    exact = ct.SYNTHETIC_TRANSMON.matrix(dims)
    assert np.max(np.abs(ct.interpolate(T_LUT, dims) - exact)) < 1e-12


def test_one_dimensional_oracle():
    lut = ct.GeometryLUT("bar", ("w",), [0.0], [10.0], ("n",), np.array([[[2.0]], [[6.0]]]))
    assert ct.interpolate(lut, [2.5])[0, 0] == pytest.approx(3.0)
    with pytest.raises(OutOfRange):
        ct.interpolate(lut, [11.0])


def test_lut_validation():
    with pytest.raises(ValidationError):
        ct.GeometryLUT("x", ("w",), [0.0], [1.0], ("a",), np.ones((3, 1, 1)))
    bad = np.array([[[1.0, 0.1], [0.2, 1.0]]] * 2)
    with pytest.raises(ValidationError):
        ct.GeometryLUT("x", ("w",), [0.0], [1.0], ("a", "b"), bad)


def test_schur_reduction_series_oracle():
    """Two islands joined through a floating pad: C_eff = c1 c2 / (c1 + c2 + cg)."""
    c1, c2, cg = 2.0, 3.0, 5.0
    m = ct._maxwell(("A", "P", "B"), {("A", "P"): c1, ("P", "B"): c2, ("P", None): cg,
                                      ("A", None): 50.0, ("B", None): 60.0})
    red = ct.AssembledCapacitance(m, ("A", "P", "B")).reduced(["A", "B"])
    assert -red.entry("A", "B") == pytest.approx(c1 * c2 / (c1 + c2 + cg))
    assert red.entry("A", "A") == pytest.approx(50.0 + c1 * (c2 + cg) / (c1 + c2 + cg))


def test_charging_energy_oracle():
    cap = ct.AssembledCapacitance(np.array([[80.0]]), ("Q",))
    e = ct.energies_from_capacitance(cap)
    assert e.e_c["Q"] == pytest.approx(ct.E2_OVER_H / 160.0)


def test_singular_and_mismatch():
    with pytest.raises(SingularMatrix):
        ct.energies_from_capacitance(ct.AssembledCapacitance(np.zeros((2, 2)), ("a", "b")))
    names = ct.pair_node_names()
    qi = ct.element_block(T_LUT, MID_T, names[0])
    cp = ct.element_block(C_LUT, MID_C, names[1])
    with pytest.raises(LabelMismatch):
        ct.assemble(qi, cp, qi)
    bad = ct.element_block(T_LUT, MID_T, {"island": "Qj", "coupler": "X", "pad": "P"})
    with pytest.raises(LabelMismatch):
        ct.assemble(qi, cp, bad)


def test_assembly_matches_direct_construction():
    names = ct.pair_node_names()
    cap = ct.assemble(ct.element_block(T_LUT, MID_T, names[0]),
                      ct.element_block(C_LUT, MID_C, names[1]),
                      ct.element_block(T_LUT, MID_T, names[2]))
    direct = ct.synthetic_device_matrix(MID_T, MID_C, MID_T)
    order = [cap.index(n) for n in direct.nodes]
    assert np.allclose(cap.matrix[np.ix_(order, order)], direct.matrix, atol=1e-12)


def test_coupling_formula():
    # E_kl / sqrt(2) * (50 * 50)^(1/4) = E_kl * 5
    assert ct.coupling_g(0.01, 10.0, 0.2, 10.0, 0.2) == pytest.approx(0.01 / np.sqrt(2) * 50 ** 0.5)


def test_perturbed_midpoint_error():
    truth = ct.forward_map(T_LUT, C_LUT, MID_T, MID_C)
    pert = ct.forward_map(ct.SYNTHETIC_TRANSMON.lut(0.003, 1), ct.SYNTHETIC_COUPLER.lut(0.003, 2),
                          MID_T, MID_C)
    for key in ("g_qq", "g_qc", "e_c_qubit"):
        assert abs(getattr(pert, key) / getattr(truth, key) - 1) <= 0.003


def test_design_search_hits_targets():
    res = ct.design_search({"g_qq": 6.0, "g_qc": 70.0}, T_LUT, C_LUT)
    assert res.max_residual <= 0.01
    check = ct.forward_map(T_LUT, C_LUT, res.transmon_dims, res.coupler_dims)
    assert check.g_qq == pytest.approx(6.0, rel=0.01)
    assert check.g_qc == pytest.approx(70.0, rel=0.01)


def test_design_search_unreachable():
    with pytest.raises(Unreachable):
        ct.design_search({"g_qq": 500.0}, T_LUT, C_LUT)


def test_unaccounted_capacitance_raises_g_qq():
    base = ct.synthetic_device_matrix(MID_T, MID_C, MID_T)
    extra = ct.synthetic_device_matrix(MID_T, MID_C, MID_T, unaccounted=0.2)
    jj = {"Qi": 1, "C": 1, "Qj": 1}
    e0 = ct.energies_from_capacitance(base, jj).coupling("Qi", "Qj")
    e1 = ct.energies_from_capacitance(extra, jj).coupling("Qi", "Qj")
    assert e1 > e0


def test_lut_text_roundtrip(tmp_path):
    path = tmp_path / "c.lut"
    ct.save_lut(C_LUT, path)
    back = ct.load_lut(path)
    assert np.array_equal(back.corners, C_LUT.corners)
    assert back.dim_names == C_LUT.dim_names and back.nodes == C_LUT.nodes
    text = ct.lut_to_text(C_LUT).replace("[corner 111]", "[corner 110]", 1)
    with pytest.raises(ValidationError):
        ct.lut_from_text(text)
