import numpy as np
import pytest
from hypothesis import given, strategies as st

from landislab.expressions import ExpressionError, compile_expression, field_from_spec


@pytest.mark.parametrize("text, expected", [
    ("1 + 2*x", lambda p: 1 + 2 * p[:, 0]),
    ("sin(pi*x)*cos(y)", lambda p: np.sin(np.pi * p[:, 0]) * np.cos(p[:, 1])),
    ("exp(-(x**2 + y**2))", lambda p: np.exp(-(p ** 2).sum(1))),
    ("-abs(x) + sqrt(4)", lambda p: 2 - np.abs(p[:, 0])),
    ("3", lambda p: np.full(len(p), 3.0)),
])
def test_evaluation(text, expected):
    p = np.random.default_rng(0).uniform(-1, 1, (20, 2))
    assert np.allclose(compile_expression(text)(p), expected(p))


@pytest.mark.parametrize("text, fragment", [
    ("__import__('os')", "only"),
    ("x.real", "unsupported"),
    ("z + 1", "unknown name"),
    ("sin(t)", "time-dependent"),
    ("x if x else y", "unsupported"),
    ("sin(x, y)", "exactly one"),
    ("1 +", "cannot parse"),
])
def test_rejected(text, fragment):
    with pytest.raises(ExpressionError, match=fragment):
        compile_expression(text)


def test_one_dimensional_has_no_y():
    with pytest.raises(ExpressionError):
        compile_expression("y", dim=1)


@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_number_fields(v):
    assert field_from_spec(v) == v


def test_vector_fields():
    assert np.array_equal(field_from_spec([1, 2], vector=True), [1.0, 2.0])
    f = field_from_spec(["x", 2], vector=True)
    assert np.allclose(f(np.array([[0.5, 0.0]])), [[0.5, 2.0]])
    with pytest.raises(ExpressionError):
        field_from_spec([1, 2, 3], vector=True)
    with pytest.raises(ExpressionError):
        field_from_spec(True)
