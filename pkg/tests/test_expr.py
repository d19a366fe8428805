import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mixeig.expr import ExpressionError, compile_expression

X = np.linspace(-1, 1, 7)


@pytest.mark.parametrize("text, expected", [
    ("1", np.ones_like(X)),
    ("x", X),
    ("2*x + 3", 2 * X + 3),
    ("-x^2", -(X ** 2)),
    ("2^3^2", np.full_like(X, 512.0)),
    ("sin(2*pi*x)", np.sin(2 * math.pi * X)),
    ("exp(-x)/(1 + x*x)", np.exp(-X) / (1 + X * X)),
    ("1e-3 * cos(x) - .5", 1e-3 * np.cos(X) - 0.5),
    ("(x - 1) * (x + 1)", X * X - 1),
])
def test_values(text, expected):
    np.testing.assert_allclose(compile_expression(text)(X), expected, rtol=1e-14, atol=1e-15)


def test_two_dimensional():
    f = compile_expression("x*y - y", dimension=2)
    pts = np.array([[1.0, 2.0], [3.0, -1.0]])
    np.testing.assert_allclose(f(pts), [0.0, -2.0])


@pytest.mark.parametrize("text, pos", [
    ("x +", 3), ("sin x", 4), ("2 * $", 4), ("foo(x)", 0), ("(x", 2), ("x)", 1),
])
def test_errors_report_position(text, pos):
    with pytest.raises(ExpressionError) as ei:
        compile_expression(text)
    assert ei.value.pos == pos


def test_y_rejected_in_1d():
    with pytest.raises(ExpressionError):
        compile_expression("x + y", dimension=1)


@given(a=st.floats(-100, 100), b=st.floats(-100, 100))
def test_affine_roundtrip(a, b):
    f = compile_expression(f"{a!r} * x + {b!r}")
    np.testing.assert_allclose(f(X), a * X + b, rtol=1e-12, atol=1e-9)
