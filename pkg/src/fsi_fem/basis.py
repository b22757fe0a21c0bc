"""Reference triangle shape functions, quadrature rules and affine maps.

The reference triangle has vertices (0,0), (1,0), (0,1); barycentric
coordinates are ``(1 - x - y, x, y)``.  Local DOF order:

* P1:  three vertices
* P1B: three vertices, then the bubble ``27 l0 l1 l2``
* P2:  three vertices, then midpoints of edges (0,1), (1,2), (2,0)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

# d(lambda_i)/d(x, y) on the reference triangle
_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
P2_EDGES = ((0, 1), (1, 2), (2, 0))


class ElementKind(str, enum.Enum):
    P1 = "P1"
    P1B = "P1B"
    P2 = "P2"

    @property
    def n_local(self) -> int:
        return {"P1": 3, "P1B": 4, "P2": 6}[self.value]

    @property
    def trace_degree(self) -> int:
        """Polynomial degree on an edge; the bubble has no trace."""
        return 2 if self is ElementKind.P2 else 1


def _check_bary(bary) -> np.ndarray:
    lam = np.asarray(bary, dtype=float)
    if lam.shape[-1] != 3:
        raise ValueError("barycentric points need three coordinates")
    if np.any(lam < -1e-12) or np.any(np.abs(lam.sum(axis=-1) - 1.0) > 1e-12):
        raise ValueError("barycentric coordinates must be nonnegative and sum to 1")
    return lam


def eval_shape(kind: ElementKind, bary) -> np.ndarray:
    """Shape function values, shape ``(..., n_local)``."""
    kind = ElementKind(kind)
    lam = _check_bary(bary)
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    if kind is ElementKind.P1:
        vals = [l0, l1, l2]
    elif kind is ElementKind.P1B:
        vals = [l0, l1, l2, 27.0 * l0 * l1 * l2]
    else:
        vals = [lam[..., i] * (2.0 * lam[..., i] - 1.0) for i in range(3)]
        vals += [4.0 * lam[..., i] * lam[..., j] for i, j in P2_EDGES]
    return np.stack(vals, axis=-1)


def eval_grad(kind: ElementKind, bary) -> np.ndarray:
    """Gradients with respect to reference coordinates, shape ``(..., n_local, 2)``."""
    kind = ElementKind(kind)
    lam = _check_bary(bary)
    d = _DLAMBDA
    ones = np.ones(lam.shape[:-1] + (1,))
    if kind in (ElementKind.P1, ElementKind.P1B):
        grads = [ones * d[i] for i in range(3)]
        if kind is ElementKind.P1B:
            l0, l1, l2 = (lam[..., i : i + 1] for i in range(3))
            grads.append(27.0 * (l1 * l2 * d[0] + l0 * l2 * d[1] + l0 * l1 * d[2]))
    else:
        grads = [(4.0 * lam[..., i : i + 1] - 1.0) * d[i] for i in range(3)]
        grads += [4.0 * (lam[..., j : j + 1] * d[i] + lam[..., i : i + 1] * d[j]) for i, j in P2_EDGES]
    return np.stack(grads, axis=-2)


def lagrange_points(kind: ElementKind) -> np.ndarray:
    """Barycentric nodal points of the Lagrange DOFs (bubble at the barycenter)."""
    kind = ElementKind(kind)
    pts = list(np.eye(3))
    if kind is ElementKind.P1B:
        pts.append(np.full(3, 1.0 / 3.0))
    elif kind is ElementKind.P2:
        for i, j in P2_EDGES:
            p = np.zeros(3)
            p[[i, j]] = 0.5
            pts.append(p)
    return np.array(pts)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (n, 3) barycentric
    weights: np.ndarray  # (n,), sum 1/2
    degree: int

    def __len__(self):
        return len(self.weights)


def _perm3(a, b, c):
    return sorted({(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)})


def _symmetric_rule(orbits, degree) -> QuadratureRule:
    pts, wts = [], []
    for (a, b, c), w in orbits:
        for p in _perm3(a, b, c):
            pts.append(p)
            wts.append(0.5 * w)
    return QuadratureRule(np.array(pts), np.array(wts), degree)


def _conical_rule(n: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi x Gauss-Legendre product, exact to degree 2n - 1."""
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (xj + 1.0)
    v = 0.5 * (xl + 1.0)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wj / 4.0, wl / 2.0)
    x = U.ravel()
    y = (V * (1.0 - U)).ravel()
    pts = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(pts, W.ravel(), 2 * n - 1)


@lru_cache(maxsize=None)
def _stored_rules() -> tuple[QuadratureRule, ...]:
    r15 = np.sqrt(15.0)
    a1, a2 = (6.0 - r15) / 21.0, (6.0 + r15) / 21.0
    rules = [
        _symmetric_rule([((1 / 3, 1 / 3, 1 / 3), 1.0)], 1),
        _symmetric_rule([((2 / 3, 1 / 6, 1 / 6), 1 / 3)], 2),
        _conical_rule(2),
        _symmetric_rule(
            [
                ((1 / 3, 1 / 3, 1 / 3), 9.0 / 40.0),
                ((a1, a1, 1.0 - 2.0 * a1), (155.0 - r15) / 1200.0),
                ((a2, a2, 1.0 - 2.0 * a2), (155.0 + r15) / 1200.0),
            ],
            5,
        ),
        _conical_rule(4),
        _conical_rule(5),
        _conical_rule(6),
    ]
    return tuple(sorted(rules, key=lambda r: r.degree))


def quadrature(degree: int) -> QuadratureRule:
    """Smallest stored rule that integrates polynomials of ``degree`` exactly."""
    if int(degree) != degree or not 1 <= degree <= 10:
        raise ValueError(f"unsupported quadrature degree {degree!r} (1..10)")
    for rule in _stored_rules():
        if rule.degree >= degree:
            return rule
    raise AssertionError("unreachable")


@lru_cache(maxsize=None)
def gauss_1d(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points on [0, 1] and weights summing to 1."""
    n = max(1, (degree + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class MappedRule:
    points: np.ndarray  # (T, n, 2)
    jacobian: np.ndarray  # (T, 2, 2)
    det: np.ndarray  # (T,)
    weights: np.ndarray  # (T, n)
    inv_jacobian: np.ndarray  # (T, 2, 2); physical row-gradient = reference row-gradient @ inv_jacobian


def map_to_physical(coords, rule: QuadratureRule) -> MappedRule:
    """Affine map data for triangles with vertex coordinates ``coords`` (3, 2) or (T, 3, 2)."""
    c = np.asarray(coords, dtype=float)
    single = c.ndim == 2
    if single:
        c = c[None]
    J = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=-1)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    scale = np.abs(J).max(axis=(1, 2))
    if np.any(np.abs(det) <= 1e-14 * np.maximum(scale, 1e-300) ** 2):
        raise ValueError("degenerate triangle (zero area)")
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1]
    inv[:, 1, 1] = J[:, 0, 0]
    inv[:, 0, 1] = -J[:, 0, 1]
    inv[:, 1, 0] = -J[:, 1, 0]
    inv /= det[:, None, None]
    ref_xy = rule.points[:, 1:]
    pts = c[:, None, 0, :] + np.einsum("tab,qb->tqa", J, ref_xy)
    wts = rule.weights[None, :] * np.abs(det)[:, None]
    return MappedRule(pts, J, det, wts, inv)
