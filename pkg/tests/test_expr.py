import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridqvi.expr import Expression, ExpressionError

finite = st.floats(-5, 5, allow_nan=False)


@given(finite, finite, finite)
def test_arithmetic_matches_numpy(a, b, c):
    e = Expression("x1 * x2 - 3 * abs(u1) + min(x1, x2, u1) + exp(-x1 * x1)")
    got = e(x=np.array([[a, b]]), u=np.array([c]), shape=(1,))
    want = a * b - 3 * abs(c) + min(a, b, c) + np.exp(-a * a)
    assert got[0] == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_piecewise_and_chained_comparison():
    e = Expression("piecewise(0 < x1 <= 1, 1, 0)")
    x = np.array([[-1.0], [0.0], [0.5], [1.0], [2.0]])
    assert e(x=x, shape=(5,)).tolist() == [0, 0, 1, 1, 0]


def test_boolean_operators():
    e = Expression("piecewise(x1 > 0 and not x2 > 0, 1, 0)")
    x = np.array([[1.0, -1.0], [1.0, 1.0], [-1.0, -1.0]])
    assert e(x=x, shape=(3,)).tolist() == [1, 0, 0]


def test_norm_of_vector():
    e = Expression("norm(x - y)")
    assert e(x=np.array([[3.0, 0.0]]), y=np.array([[0.0, 4.0]]), shape=(1,))[0] == pytest.approx(5.0)


def test_constant_broadcasts_to_shape():
    assert Expression("2").__call__(shape=(4,)).tolist() == [2, 2, 2, 2]


def test_time_and_indices():
    e = Expression("t * x3 + v2")
    assert e.uses_time
    assert e.max_index("x") == 3 and e.max_index("v") == 2
    assert not Expression("x1").uses_time


@pytest.mark.parametrize("src", [
    "__import__('os')", "x1.real", "open('f')", "lambda: 1", "[1, 2]", "x1 if x1 else 0", "foo(x1)", "q1", "x0",
    "x1 +", "",
])
def test_rejects_forbidden_constructs(src):
    with pytest.raises(ExpressionError):
        Expression(src)


def test_bare_vector_only_inside_norm():
    with pytest.raises(ExpressionError):
        Expression("x + 1")
