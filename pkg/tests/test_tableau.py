import json
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from sprknet.tableau import (BUILTIN_NAMES, PrkTableau, builtin_tableau, check_order_conditions,
                             check_symplectic, explicit_tableau, load_tableau)


def test_builtin_weights():
    t3 = builtin_tableau("sprk3")
    assert t3.b == (F(7, 24), F(3, 4), F(-1, 24))
    assert t3.B == (F(2, 3), F(-2, 3), F(1))
    t4 = builtin_tableau("sprk4")
    assert t4.b == (F(7, 48), F(3, 8), F(-1, 48), F(-1, 48), F(3, 8), F(7, 48))
    assert t4.B == (F(1, 3), F(-1, 3), F(1), F(-1, 3), F(1, 3), F(0))
    t2 = builtin_tableau("sprk2")
    assert t2.b == (F(0), F(1)) and t2.B == (F(1, 2), F(1, 2))
    e = builtin_tableau("euler1")
    assert e.a == ((F(1),),) and e.A == ((F(0),),)


def test_unknown_name_lists_choices():
    with pytest.raises(ValueError, match="euler1, sprk2, sprk3, sprk4"):
        builtin_tableau("rk4")


def test_float_entries_rejected():
    with pytest.raises(TypeError):
        explicit_tableau([0.5, 0.5], [1, 0])


def test_shape_validation():
    with pytest.raises(ValueError):
        PrkTableau(b=[1], B=[1, 0], a=[[1]], A=[[0]])
    with pytest.raises(ValueError):
        PrkTableau(b=[1], B=[1], a=[[1, 0]], A=[[0]])


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtin_symplectic_exact(name):
    rep = check_symplectic(builtin_tableau(name))
    assert rep.symplectic
    assert all(x == 0 for row in rep.symplectic_residuals for x in row)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtin_nodes_and_structure(name):
    t = builtin_tableau(name)
    assert t.is_explicit
    for i in range(t.s):
        assert t.c[i] == sum(t.A[i], F(0))
        assert t.C[i] == sum(t.a[i], F(0))
        assert all(t.a[i][j] == 0 for j in range(i + 1, t.s))
        assert all(t.A[i][j] == 0 for j in range(i, t.s))


def test_derived_nodes():
    t3 = builtin_tableau("sprk3")
    assert t3.c == (0, F(2, 3), 0)
    assert t3.C == (F(7, 24), F(25, 24), 1)
    t4 = builtin_tableau("sprk4")
    assert t4.c == (0, F(1, 3), 0, 1, F(2, 3), 1)
    assert t4.C == (F(7, 48), F(25, 48), F(1, 2), F(23, 48), F(41, 48), 1)


def test_euler1_residual_hand_value():
    rep = check_symplectic(builtin_tableau("euler1"))
    assert rep.symplectic_residuals == [[0]]


def test_tampered_euler_not_symplectic():
    t = PrkTableau(b=[1], B=[1], a=[[1]], A=[[1]])
    rep = check_symplectic(t)
    assert rep.symplectic_residuals == [[1]]
    assert not rep.symplectic


@pytest.mark.parametrize("name,order", [("euler1", 1), ("sprk2", 2), ("sprk3", 3), ("sprk4", 3)])
def test_max_verified_order(name, order):
    assert check_order_conditions(builtin_tableau(name)).max_verified_order == order


def test_euler1_order2_residuals():
    rep = check_order_conditions(builtin_tableau("euler1"), p_max=2)
    res = {r.label: r.residual for r in rep.order_residuals}
    assert res["sum b_i c_i"] == F(-1, 2)
    assert res["sum B_i C_i"] == F(1, 2)
    assert rep.max_verified_order == 1


def test_node_failure_skips_higher_orders():
    t = builtin_tableau("sprk2")
    object.__setattr__(t, "c", (F(1), F(1)))   # bypass construction on purpose
    rep = check_order_conditions(t, p_max=3)
    assert not rep.nodes_ok
    assert {r.order for r in rep.order_residuals} == {1}


def test_p_max_bounds():
    with pytest.raises(ValueError):
        check_order_conditions(builtin_tableau("sprk3"), p_max=4)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_json_round_trip(name, tmp_path):
    t = builtin_tableau(name)
    path = tmp_path / "t.json"
    path.write_text(t.to_json())
    back = load_tableau(path)
    assert (back.b, back.B, back.a, back.A) == (t.b, t.B, t.a, t.A)
    assert json.loads(back.to_json()) == json.loads(t.to_json())


def test_json_stage_count_mismatch():
    d = builtin_tableau("sprk2").to_dict()
    d["s"] = 3
    with pytest.raises(ValueError):
        PrkTableau.from_dict(d)


weights = st.lists(st.fractions(min_value=-2, max_value=2, max_denominator=50), min_size=1, max_size=6)


@given(weights, st.data())
def test_any_explicit_layout_is_symplectic(b, data):
    # the explicit construction satisfies the identity for arbitrary weights
    B = data.draw(st.lists(st.fractions(min_value=-2, max_value=2, max_denominator=50),
                           min_size=len(b), max_size=len(b)))
    assert check_symplectic(explicit_tableau(b, B)).symplectic


@given(st.integers(0, 2), st.integers(0, 2), st.fractions(min_value=-1, max_value=1).filter(bool))
def test_perturbing_a_breaks_symplecticity(i, j, eps):
    t = builtin_tableau("sprk3")
    a = [list(r) for r in t.a]
    a[i][j] += eps
    rep = check_symplectic(PrkTableau(b=t.b, B=t.B, a=a, A=t.A))
    assert not rep.symplectic
