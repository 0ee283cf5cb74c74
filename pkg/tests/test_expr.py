import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vakonomic.expr import ExpressionError, compile_array, compile_scalar, parse


def test_grammar_covers_arithmetic_powers_and_functions():
    f = compile_scalar("2*x1^2 - x2/4 + sin(x1)*cos(x2) + exp(-x1) ** 2", ["x1", "x2"])
    z = np.array([0.3, -1.2])
    expect = 2 * 0.09 + 1.2 / 4 + math.sin(0.3) * math.cos(-1.2) + math.exp(-0.6)
    assert f(z) == pytest.approx(expect, rel=1e-14)


def test_symbolic_derivatives():
    f = compile_scalar("a*x^3*y", ["x", "y"], {"a": 2.0})
    z = np.array([1.5, -2.0])
    assert np.allclose(f.grad(z), [6 * 1.5 ** 2 * -2.0, 2 * 1.5 ** 3])
    assert np.allclose(f.hess(z), [[12 * 1.5 * -2.0, 6 * 1.5 ** 2], [6 * 1.5 ** 2, 0.0]])


def test_constant_expression_has_full_shape_derivatives():
    f = compile_scalar("3", ["x", "y", "z"])
    assert f.grad(np.zeros(3)).shape == (3,)
    assert f.hess(np.zeros(3)).shape == (3, 3)


def test_compile_array_shapes_and_jacobian():
    val, jac = compile_array([["x1", "0"], ["x1*x2", "1"]], ["x1", "x2"])
    z = np.array([2.0, 3.0])
    assert np.array_equal(val(z), [[2.0, 0.0], [6.0, 1.0]])
    J = jac(z)
    assert J.shape == (2, 2, 2)
    assert np.array_equal(J[1, 0], [3.0, 2.0])


@pytest.mark.parametrize("src, column", [
    ("x1*(p1", 3),
    ("x1 + + ", 6),
    ("x1 $ 2", 3),
])
def test_syntax_errors_point_at_the_offending_column(src, column):
    with pytest.raises(ExpressionError) as info:
        parse(src, ["x1", "p1"])
    assert info.value.position == column
    lines = str(info.value).splitlines()
    assert lines[-1].index("^") - 2 == column


def test_unknown_name_and_forbidden_call_are_reported():
    with pytest.raises(ExpressionError, match="unknown identifier 'q'") as info:
        parse("x + 2*q", ["x"])
    assert info.value.position == 6
    with pytest.raises(ExpressionError, match="only sin"):
        parse("log(x)", ["x"])
    with pytest.raises(ExpressionError, match="unsupported"):
        parse("x if x else 1", ["x"])
    with pytest.raises(ExpressionError, match="empty"):
        parse("   ", ["x"])


def test_caret_is_mapped_through_caret_power():
    with pytest.raises(ExpressionError) as info:
        parse("x^2 + y", ["x"])
    assert info.value.position == 6


def test_leading_whitespace_is_allowed():
    assert compile_scalar("   x + 1", ["x"])(np.array([1.0])) == 2.0


_atoms = st.sampled_from(["x", "y", "1.5", "2", "0.25"])


def _exprs():
    return st.recursive(_atoms, lambda sub: st.one_of(
        st.tuples(sub, st.sampled_from(["+", "-", "*"]), sub).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        sub.map(lambda s: f"sin({s})"),
        sub.map(lambda s: f"({s})^2"),
    ), max_leaves=8)


@given(_exprs(), st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=60, deadline=None)
def test_parsed_value_matches_python_evaluation(src, x, y):
    f = compile_scalar(src, ["x", "y"])
    expect = eval(src.replace("^", "**"), {"sin": math.sin, "x": x, "y": y})
    assert f(np.array([x, y])) == pytest.approx(expect, rel=1e-12, abs=1e-12)
