import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsi_fem.basis import ElementKind, eval_grad, eval_shape, gauss_1d, lagrange_points, map_to_physical, quadrature

KINDS = list(ElementKind)


def bary(x, y):
    return np.array([1.0 - x - y, x, y])


def test_local_counts():
    assert [k.n_local for k in KINDS] == [3, 4, 6]


def test_p1_barycenter():
    assert np.allclose(eval_shape("P1", np.full(3, 1 / 3)), 1 / 3)


def test_bubble_normalized():
    assert eval_shape("P1B", np.full(3, 1 / 3))[3] == pytest.approx(1.0, abs=1e-15)


def test_p2_midpoint():
    v = eval_shape("P2", [0.5, 0.5, 0.0])
    assert np.allclose(v, [0, 0, 0, 1, 0, 0], atol=1e-15)


@pytest.mark.parametrize("kind", KINDS)
def test_nodal_property(kind):
    V = eval_shape(kind, lagrange_points(kind))
    if kind is ElementKind.P1B:
        # vertices nodal; bubble is 1 at the barycenter but vertex functions are not 0 there
        assert np.allclose(V[:3, :3], np.eye(3)) and np.allclose(V[:3, 3], 0.0)
        assert V[3, 3] == pytest.approx(1.0)
    else:
        assert np.allclose(V, np.eye(kind.n_local), atol=1e-14)


@pytest.mark.parametrize("kind", ["P1", "P2"])
def test_partition_of_unity(kind):
    pts = quadrature(8).points
    assert np.allclose(eval_shape(kind, pts).sum(axis=1), 1.0, atol=1e-14)
    assert np.allclose(eval_grad(kind, pts).sum(axis=1), 0.0, atol=1e-13)


def test_p1_gradients_constant():
    g = eval_grad("P1", quadrature(5).points)
    assert np.allclose(g, g[0])


@pytest.mark.parametrize("kind", KINDS)
def test_gradient_vs_finite_difference(kind):
    eps = 1e-6
    for x, y in [(0.1, 0.1), (0.7, 0.2), (0.1, 0.8), (0.2, 0.3)]:
        g = eval_grad(kind, bary(x, y))
        fx = (eval_shape(kind, bary(x + eps, y)) - eval_shape(kind, bary(x - eps, y))) / (2 * eps)
        fy = (eval_shape(kind, bary(x, y + eps)) - eval_shape(kind, bary(x, y - eps))) / (2 * eps)
        assert np.allclose(g[:, 0], fx, atol=1e-7) and np.allclose(g[:, 1], fy, atol=1e-7)


def test_p2_vertex_gradient_central_fd():
    eps = 1e-5
    x, y = 0.0, 0.0
    # central differences of the polynomial extension (valid outside the triangle too)
    def shape(x, y):
        lam = np.array([1.0 - x - y, x, y])
        return np.concatenate([lam * (2 * lam - 1), [4 * lam[0] * lam[1], 4 * lam[1] * lam[2], 4 * lam[2] * lam[0]]])

    fx = (shape(x + eps, y) - shape(x - eps, y)) / (2 * eps)
    fy = (shape(x, y + eps) - shape(x, y - eps)) / (2 * eps)
    g = eval_grad("P2", bary(x, y))
    assert np.allclose(g[:, 0], fx, atol=1e-8) and np.allclose(g[:, 1], fy, atol=1e-8)


def test_invalid_barycentric():
    with pytest.raises(ValueError):
        eval_shape("P1", [0.5, 0.6, -0.1])
    with pytest.raises(ValueError):
        eval_grad("P2", [0.5, 0.5])


@pytest.mark.parametrize("degree", range(1, 11))
def test_rule_weights_and_monomials(degree):
    r = quadrature(degree)
    assert r.degree >= degree
    assert np.all(r.weights > 0)
    assert r.weights.sum() == pytest.approx(0.5, abs=1e-15)
    x, y = r.points[:, 1], r.points[:, 2]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            assert abs(r.weights @ (x**a * y**b) - exact) <= 1e-14


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.data())
def test_random_monomials(degree, data):
    a = data.draw(st.integers(0, degree))
    b = data.draw(st.integers(0, degree - a))
    r = quadrature(degree)
    val = r.weights @ (r.points[:, 1] ** a * r.points[:, 2] ** b)
    assert val == pytest.approx(math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2), abs=1e-14)


def test_bubble_squared_integral():
    # int 27^2 l0^2 l1^2 l2^2 = 729 * 2! 2! 2! / 8! on the unit right triangle
    r = quadrature(6)
    b = eval_shape("P1B", r.points)[:, 3]
    assert r.weights @ b**2 == pytest.approx(729 * 8 / math.factorial(8), abs=1e-14)


@pytest.mark.parametrize("degree", [0, 11, 2.5])
def test_unsupported_degree(degree):
    with pytest.raises(ValueError):
        quadrature(degree)


def test_bubble_vanishes_on_edges():
    s = np.linspace(0, 1, 20)
    for i, j in ((0, 1), (1, 2), (2, 0)):
        lam = np.zeros((20, 3))
        lam[:, i], lam[:, j] = 1 - s, s
        assert np.max(np.abs(eval_shape("P1B", lam)[:, 3])) <= 1e-14


def test_gauss_1d():
    x, w = gauss_1d(7)
    assert w.sum() == pytest.approx(1.0)
    assert w @ x**7 == pytest.approx(1 / 8, abs=1e-15)


def test_map_identity():
    r = quadrature(3)
    m = map_to_physical(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), r)
    assert np.allclose(m.jacobian[0], np.eye(2)) and np.allclose(m.inv_jacobian[0], np.eye(2))
    assert np.allclose(m.points[0], r.points[:, 1:])
    assert np.allclose(m.weights[0], r.weights)


def test_map_total_weight_is_area():
    m = map_to_physical(np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]), quadrature(2))
    assert m.weights.sum() == pytest.approx(2.0)


def test_map_degenerate():
    with pytest.raises(ValueError):
        map_to_physical(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]), quadrature(1))


def test_gradient_transform_fd():
    coords = np.array([[0.3, 0.1], [1.4, 0.5], [0.2, 1.7]])
    m = map_to_physical(coords, quadrature(1))
    J = m.jacobian[0]
    lam = np.array([0.2, 0.5, 0.3])
    g = eval_grad("P2", lam) @ m.inv_jacobian[0]  # physical gradients (n, 2)

    def phys_shape(p):
        ref = np.linalg.solve(J, p - coords[0])
        return eval_shape("P2", bary(*ref))

    p0 = lam @ coords
    eps = 1e-6
    for d in range(2):
        e = np.zeros(2)
        e[d] = eps
        fd = (phys_shape(p0 + e) - phys_shape(p0 - e)) / (2 * eps)
        assert np.allclose(g[:, d], fd, atol=1e-8)
