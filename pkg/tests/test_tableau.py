import numpy as np
import pytest

import svpark as sv
from svpark.exceptions import NameNotFound


def test_c_recomputed_from_row_sums():
    t = sv.ButcherTableau(a=[[0.0, 0.0], [0.5, 0.5]], b=[0.5, 0.5])
    assert np.allclose(t.c, [0.0, 1.0], atol=1e-12)
    assert t.s == 2


def test_inconsistent_c_rejected():
    with pytest.raises(ValueError):
        sv.ButcherTableau(a=[[0.0, 0.0], [0.5, 0.5]], b=[0.5, 0.5], c=[0.3, 1.0])


def test_tableau_arrays_immutable():
    t = sv.ButcherTableau(a=[[0.0, 0.0], [0.5, 0.5]], b=[0.5, 0.5])
    with pytest.raises(ValueError):
        t.a[0, 0] = 1.0


def test_trapezoidal_tableau_admissible():
    t = sv.builtin_tableaux()["rattle_trapezoidal"]
    report = sv.check_admissibility(t)
    assert report.satisfied
    assert report.reasons == ()


def test_euler_a_tableau_rejected_for_zero_weight():
    t = sv.builtin_tableaux()["euler_a"]
    report = sv.check_admissibility(t)
    assert not report.satisfied
    assert any("b_2" in r for r in report.reasons)


def test_implicit_euler_rejected_for_nonzero_first_row():
    t = sv.builtin_tableaux()["implicit_euler"]
    report = sv.check_admissibility(t)
    assert not report.satisfied
    assert any("a_11" in r for r in report.reasons)


def test_check_is_pure_and_idempotent():
    t = sv.builtin_tableaux()["rattle_trapezoidal"]
    first = sv.check_admissibility(t)
    second = sv.check_admissibility(t)
    assert first == second


def test_builtin_names_and_coefficients():
    tabs = sv.builtin_tableaux()
    assert set(tabs) == {"rattle_trapezoidal", "euler_a", "implicit_euler"}
    assert np.allclose(tabs["rattle_trapezoidal"].b, [0.5, 0.5])
    assert tabs["euler_a"].a[1, 0] == 1.0
    assert tabs["implicit_euler"].a[0, 0] == 1.0


def test_unknown_builtin_raises_name_not_found():
    with pytest.raises(NameNotFound):
        sv.builtin_tableaux()["missing"]


def test_tableau_from_config_inline_and_name():
    by_name = sv.tableau_from_config("rattle_trapezoidal")
    inline = sv.tableau_from_config({"a": [[0.0, 0.0], [0.5, 0.5]], "b": [0.5, 0.5]})
    assert np.array_equal(by_name.a, inline.a)
    assert np.array_equal(by_name.b, inline.b)


def test_conjugate_weights_structure():
    # The last stage's force never enters the internal momenta of a
    # stiffly accurate tableau, and the explicit first stage gives a zero
    # first row of the coupling product: that structure is what frees the
    # last multiplier for the end-of-step projection.
    t = sv.builtin_tableaux()["rattle_trapezoidal"]
    ahat = t.conjugate_weights()
    assert np.allclose(ahat[:, -1], 0.0, atol=1e-15)
    assert np.allclose((t.a @ ahat)[0], 0.0, atol=1e-15)
    assert abs((t.a @ ahat)[1, 0] - 0.5) < 1e-15
