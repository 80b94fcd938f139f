import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjdiv.errors import EvalError, ParseError
from hjdiv.expr import compile_programs, eval_expression, parse_expression


@pytest.mark.parametrize(
    "src, x, expected",
    [
        ("1/(x1^2)", [2.0], 0.25),
        ("exp(x1)-x1-1", [0.0], 0.0),
        ("arccos(x1)", [-1.0], math.pi),
        ("2^3^2", [], 512.0),
        ("-2^2", [], -4.0),
        ("2*-x1", [3.0], -6.0),
        ("sqrt(x1) + log(e)", [4.0], 3.0),
        ("sin(pi/2)*cos(0)", [], 1.0),
        ("x1 - x2 - x3", [1.0, 2.0, 3.0], -4.0),
        ("1.5e-3*1000", [], 1.5),
    ],
)
def test_evaluation(src, x, expected):
    assert eval_expression(parse_expression(src), x) == pytest.approx(expected, abs=1e-15)


def test_velocity_variables():
    e = parse_expression("exp(v1/x1) - v1/x1 - 1")
    assert eval_expression(e, [1.0], [1.0]) == pytest.approx(math.e - 2, abs=1e-15)
    assert e.variables() == {("x", 1), ("v", 1)}


@pytest.mark.parametrize(
    "src, pos",
    [("1 +", 3), ("foo(x1)", 0), ("x1 $ 2", 3), ("(x1", 3), ("exp(x1, x2)", 6), ("y1", 0), ("x0", 0)],
)
def test_parse_errors_carry_position(src, pos):
    with pytest.raises(ParseError) as info:
        parse_expression(src)
    assert info.value.position == pos


@pytest.mark.parametrize("src, x", [("log(x1)", [0.0]), ("1/x1", [0.0]), ("sqrt(x1)", [-1.0]), ("arccos(x1)", [2.0])])
def test_eval_errors(src, x):
    with pytest.raises(EvalError):
        eval_expression(parse_expression(src), x)


def test_missing_variable_is_eval_error():
    with pytest.raises(EvalError):
        eval_expression(parse_expression("x2"), [1.0])


def test_compiled_program_layout():
    prog = compile_programs([parse_expression("1/x1^2"), parse_expression("2")], 1)
    assert prog.count == 2
    assert list(prog.constant) == [0, 1]


_leaf = st.one_of(
    st.sampled_from(["x1", "x2", "pi", "e"]),
    st.floats(min_value=0, max_value=1e6, allow_nan=False).map(repr),
)


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from("+-*/^"), children).map(lambda t: f"{t[0]} {t[1]} {t[2]}"),
        children.map(lambda c: f"-{c}"),
        children.map(lambda c: f"({c})"),
        st.tuples(st.sampled_from(["exp", "log", "sqrt", "sin", "cos", "arccos"]), children).map(
            lambda t: f"{t[0]}({t[1]})"
        ),
    )


@settings(max_examples=300, deadline=None)
@given(st.recursive(_leaf, _combine, max_leaves=12))
def test_parse_print_parse_is_idempotent(src):
    first = parse_expression(src)
    printed = first.to_source()
    second = parse_expression(printed)
    assert second == first
    assert second.to_source() == printed


@settings(max_examples=200, deadline=None)
@given(st.recursive(_leaf, _combine, max_leaves=8), st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_printed_form_evaluates_identically(src, a, b):
    first = parse_expression(src)
    second = parse_expression(first.to_source())
    try:
        expected = eval_expression(first, [a, b])
    except (EvalError, OverflowError):
        return
    got = eval_expression(second, [a, b])
    assert got == expected or (math.isnan(got) and math.isnan(expected))
