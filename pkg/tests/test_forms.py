"""Exterior calculus on the double coordinate block, both coframes."""

import numpy as np
import pytest

from spraydirac.expr import (
    ONE, ZERO, Const, Context, Point, evaluate, parse, simplify,
)
from spraydirac.forms import (
    BERWALD, TwoForm, d_scalar, exterior_derivative_1, exterior_derivative_2,
    format_two_form, interior_product, lie_derivative, wedge,
)
from spraydirac.geometry import (
    OneForm, SemiSpray, VectorField, connection_coefficients,
)


CTX2 = Context(dim=2)
CTX3 = Context(dim=3, params={"A": 1.0})


def _spray2():
    return SemiSpray(2, (parse("0", CTX2), parse("y2^2", CTX2)))


def _semispray3():
    G = tuple(parse(t, CTX3) for t in ("A*y1/y3", "A*y2/y3", "A"))
    return SemiSpray(3, G, (parse("y3", CTX3),))


SCALARS = ["x1*y2 + sin(x2)", "exp(x1)*y1^2", "x2 - (1/2)*ln(y1/y2)"]


@pytest.mark.parametrize("text", SCALARS)
def test_d_squared_on_scalars(text):
    f = parse(text, CTX2)
    dd = exterior_derivative_1(d_scalar(f, 2))
    assert dd.is_structurally_zero()


def test_d_squared_on_one_forms():
    alpha = OneForm(2,
                    (parse("x1*y1", CTX2), parse("cos(x2)", CTX2)),
                    (parse("x2^2", CTX2), parse("y1*y2", CTX2)))
    ddd = exterior_derivative_2(exterior_derivative_1(alpha))
    assert ddd.is_structurally_zero()


def test_d_of_adapted_fiber_coframe():
    # delta y2 = dy2 + 2*y2*dx2; its differential is -2 dx2 ^ dy2
    alpha = OneForm(2, (ZERO, parse("2*y2", CTX2)), (ZERO, ONE))
    d = exterior_derivative_1(alpha)
    assert dict(d.items()) == {(1, 3): Const(-2)}


def test_closed_vertical_pairing_form():
    S = _semispray3()
    N = connection_coefficients(S)
    omega = TwoForm.single(3, 2, 5, 2, basis=BERWALD).with_connection(N)
    coord = omega.to_coordinates()
    # the fiber coframe slot for the constant coefficient carries no
    # connection term here, so the rewrite is the plain coordinate pair
    assert dict(coord.items()) == {(2, 5): Const(2)}
    assert exterior_derivative_2(coord).is_structurally_zero()
    assert exterior_derivative_2(omega).is_structurally_zero()


def test_interior_product_of_second_order_field():
    S = _semispray3()
    omega = TwoForm.single(3, 2, 5, 2)
    pulled = interior_product(S.vector_field(), omega)
    assert all(simplify(c) == ZERO for c in pulled.dx[:2])
    assert simplify(pulled.dx[2]) == simplify(parse("4*A", CTX3))
    assert all(simplify(c) == ZERO for c in pulled.dy[:2])
    assert simplify(pulled.dy[2]) == simplify(parse("2*y3", CTX3))


def test_lie_derivative_of_coframe_along_vertical():
    alpha = OneForm(2, (ZERO, parse("2*y2", CTX2)), (ZERO, ONE))
    X = VectorField.coordinate(2, "y", 2)
    moved = lie_derivative(X, alpha)
    assert simplify(moved.dx[1]) == Const(2)
    assert moved.dx[0] == ZERO
    assert all(simplify(c) == ZERO for c in moved.dy)


def test_wedge_products():
    dx1 = OneForm.coordinate(2, "x", 1)
    dx2 = OneForm.coordinate(2, "x", 2)
    dy1 = OneForm.coordinate(2, "y", 1)
    assert wedge(dx1, dx1).is_structurally_zero()
    assert dict(wedge(dx1, dy1).items()) == {(0, 2): ONE}
    flipped = wedge(dy1, dx1)
    assert dict(flipped.items()) == {(0, 2): Const(-1)}
    scaled = wedge(dx2.scaled(parse("x1", CTX2)), dy1)
    assert dict(scaled.items()) == {(1, 2): parse("x1", CTX2)}


def test_evaluate_matrix_agrees_with_call():
    omega = (TwoForm.single(3, 2, 5, 2)
             + TwoForm.single(3, 0, 1, parse("x1", CTX3)))
    rng = np.random.default_rng(17)
    for _ in range(5):
        p = Point(tuple(rng.uniform(-2, 2, 3)), tuple(rng.uniform(-2, 2, 3)),
                  params={"A": 1.0})
        M = omega.evaluate_matrix(p, CTX3)
        assert np.allclose(M, -M.T, atol=1e-13)
        xv = rng.uniform(-1, 1, 6)
        yv = rng.uniform(-1, 1, 6)
        X = VectorField(3, tuple(Const(v) for v in xv[:3]),
                        tuple(Const(v) for v in xv[3:]))
        Y = VectorField(3, tuple(Const(v) for v in yv[:3]),
                        tuple(Const(v) for v in yv[3:]))
        direct = evaluate(omega(X, Y), p, CTX3)
        assert direct == pytest.approx(float(xv @ M @ yv), abs=1e-12)


def test_berwald_rewrite_uses_connection():
    N = connection_coefficients(_spray2())
    berw = TwoForm.single(2, 1, 3, 1, basis=BERWALD, N=N)
    coord = berw.to_coordinates()
    # dx2 ^ (dy2 + 2*y2*dx2) collapses: the dx2 ^ dx2 part dies
    assert coord.basis == "coord"
    assert dict(coord.items()) == {(1, 3): ONE}


def test_exterior_derivative_of_function_coefficient():
    omega = TwoForm.single(2, 1, 2, parse("x1", CTX2))
    d = exterior_derivative_2(omega)
    assert dict(d.items()) == {(0, 1, 2): ONE}
    assert d.components() == [ONE]


def test_two_form_printing():
    omega = TwoForm.single(2, 0, 2, 1) + TwoForm.single(2, 1, 3, parse("-2*y2", CTX2))
    text = format_two_form(omega)
    assert "dx1^dy1" in text
    assert "dx2^dy2" in text
    assert format_two_form(TwoForm.zero(2)) == "0"
