"""Bilinear and linear forms of the coupled problem, assembled with numpy.

Element loops are vectorized over all triangles of a space's region.  Vector
fields use component-blocked local numbering ``c * n_local + a``, matching
:meth:`Space.vector_cell_dofs`.

``D(u) = (grad u + grad u^T) / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import ElementKind, eval_grad, eval_shape, gauss_1d, map_to_physical, quadrature
from .dofs import DofLayout, FEField, LayoutError, Space
from .linalg import finalize

ASSEMBLY_DEGREE = 6
EDGE_DEGREE = 7

BILINEAR_KINDS = ("grad_grad", "symgrad_symgrad", "mass", "div_pressure")
LINEAR_KINDS = ("volume_load", "boundary_load", "interface_load", "mass_source_load")


@dataclass(frozen=True)
class FormSpec:
    kind: str
    trial: str | None = None
    test: str = "u"
    region: str | None = None  # boundary side names joined by "+", or an interface tag
    coefficient: float = 1.0
    time: float = 0.0

    def __post_init__(self):
        if self.kind not in BILINEAR_KINDS + LINEAR_KINDS:
            raise ValueError(f"unknown form kind {self.kind!r}")


def _tables(kind: ElementKind, degree: int):
    rule = quadrature(degree)
    return rule, eval_shape(kind, rule.points), eval_grad(kind, rule.points)


def _geometry(coords, rule):
    m = map_to_physical(coords, rule)
    return m.weights, m.inv_jacobian, m.points


def element_matrices(form: str, trial_kind, coords, components: int = 1, test_kind=None,
                     degree: int = ASSEMBLY_DEGREE) -> np.ndarray:
    """Local matrices, shape (T, n_test, n_trial).

    ``div_pressure`` has the scalar ``test_kind`` space as rows and the vector
    ``trial_kind`` space as columns: entry ``(div phi_b, psi_a)``.
    """
    trial_kind = ElementKind(trial_kind)
    rule, N, G = _tables(trial_kind, degree)
    w, inv, _ = _geometry(coords, rule)
    g = np.einsum("qnb,tba->tqna", G, inv)
    C = components

    if form == "div_pressure":
        Np = eval_shape(ElementKind(test_kind), rule.points)
        blocks = [np.einsum("tq,qi,tqj->tij", w, Np, g[..., d]) for d in range(2)]
        return np.concatenate(blocks, axis=2)

    if form == "mass":
        scalar = np.einsum("tq,qi,qj->tij", w, N, N)
    elif form == "grad_grad":
        scalar = np.einsum("tq,tqia,tqja->tij", w, g, g)
    elif form == "symgrad_symgrad":
        if C != 2:
            raise ValueError("symgrad_symgrad needs a 2-component space")
        gg = np.einsum("tq,tqia,tqja->tij", w, g, g)
        T, n = gg.shape[0], gg.shape[1]
        K = np.zeros((T, 2 * n, 2 * n))
        for c in range(2):
            for d in range(2):
                # (c, a) x (d, b): 1/2 [delta_cd grad_a . grad_b + d_d phi_a * d_c phi_b]
                cross = np.einsum("tq,tqi,tqj->tij", w, g[..., d], g[..., c])
                K[:, c * n : (c + 1) * n, d * n : (d + 1) * n] = 0.5 * ((c == d) * gg + cross)
        return K
    else:
        raise ValueError(f"unknown bilinear form {form!r}")

    if C == 1:
        return scalar
    T, n = scalar.shape[0], scalar.shape[1]
    out = np.zeros((T, C * n, C * n))
    for c in range(C):
        out[:, c * n : (c + 1) * n, c * n : (c + 1) * n] = scalar
    return out


def _region_coords(space: Space):
    return space.mesh.nodes[space.mesh.triangles[space.tri]]


def assemble_matrix(form: str, trial: Space, test: Space | None = None, coefficient: float = 1.0) -> sp.csr_matrix:
    """Field-level matrix of shape (test.ndofs, trial.ndofs)."""
    test = trial if test is None else test
    if not np.array_equal(trial.tri, test.tri):
        raise LayoutError("trial and test spaces live on different regions")
    coords = _region_coords(trial)
    if form == "div_pressure":
        if test.components != 1 or trial.components != 2:
            raise LayoutError("div_pressure pairs a scalar test space with a vector trial space")
        loc = element_matrices(form, trial.kind, coords, 2, test_kind=test.kind)
    else:
        if trial is not test and (trial.kind != test.kind or trial.components != test.components):
            raise LayoutError(f"{form} needs matching trial and test spaces")
        loc = element_matrices(form, trial.kind, coords, trial.components)
    rows = test.vector_cell_dofs() if form != "div_pressure" else test.cell_dofs
    cols = trial.vector_cell_dofs()
    R = np.broadcast_to(rows[:, :, None], loc.shape)
    Cc = np.broadcast_to(cols[:, None, :], loc.shape)
    return finalize(R.ravel(), Cc.ravel(), coefficient * loc.ravel(), (test.ndofs, trial.ndofs))


def _field_block(layout: DofLayout, field_id: str) -> sp.csr_matrix:
    """Prolongation rows of one field: field vector = P_f @ unknowns."""
    P = layout.prolongation()
    nw, nu, _ = layout.field_sizes
    start = {"w": 0, "eta": 0, "u": nw, "p": nw + nu}[field_id]
    n = layout.space(field_id).ndofs
    return P[start : start + n]


def assemble_bilinear(spec: FormSpec, layout: DofLayout):
    """Global-numbering triplets ``(rows, cols, vals)`` of one bilinear form.

    Aliases are applied through the layout; rows/columns of Dirichlet DOFs are
    dropped (their values enter right-hand sides separately).
    """
    if spec.kind not in BILINEAR_KINDS:
        raise ValueError(f"{spec.kind} is not a bilinear form")
    trial_id = spec.trial or spec.test
    trial, test = layout.space(trial_id), layout.space(spec.test)
    A = assemble_matrix(spec.kind, trial, test, spec.coefficient)
    G = (_field_block(layout, spec.test).T @ A @ _field_block(layout, trial_id)).tocoo()
    return G.row, G.col, G.data




def _eval_vector(func, x, y, t, C, *extra):
    vals = np.asarray(func(x, y, t, *extra), dtype=float)
    return vals.reshape(len(x), C)


def _scatter(space: Space, loc: np.ndarray, tri_local=None) -> np.ndarray:
    """loc (T, C, n) -> space vector."""
    cd = space.cell_dofs if tri_local is None else space.cell_dofs[tri_local]
    out = np.zeros((space.components, space.n_scalar))
    for c in range(space.components):
        np.add.at(out[c], cd, loc[:, c, :])
    return out.ravel()


def volume_load(space: Space, func, t: float = 0.0, degree: int = ASSEMBLY_DEGREE) -> np.ndarray:
    """``(f(t), v)`` over the space's region; ``func(x, y, t)``."""
    qd = space.quad_data(degree)
    T, q = qd.weights.shape
    f = _eval_vector(func, qd.x, qd.y, t, space.components).reshape(T, q, -1)
    wf = (qd.weights[:, :, None] * f).transpose(0, 2, 1)  # (T, C, q)
    return _scatter(space, wf @ qd.N)


def gradient_load(space: Space, func, t: float = 0.0, degree: int = ASSEMBLY_DEGREE) -> np.ndarray:
    """``(G(t), grad v)`` for a tensor field ``func(x, y, t) -> (n, C, 2)``."""
    qd = space.quad_data(degree)
    T, n, q, _ = qd.grads.shape
    C = space.components
    G = np.asarray(func(qd.x, qd.y, t), dtype=float).reshape(T, q, C, 2)
    wG = (qd.weights[:, :, None, None] * G).transpose(0, 2, 1, 3).reshape(T, C, q * 2)
    loc = np.matmul(wG, qd.grads.reshape(T, n, q * 2).transpose(0, 2, 1))
    return _scatter(space, loc)


def edge_load(space: Space, edges, adj_tri, normals, func, t: float = 0.0, degree: int = EDGE_DEGREE) -> np.ndarray:
    """``(g(t), v)`` over the given edges; ``func(x, y, t, nx, ny)``."""
    if len(edges) == 0:
        return np.zeros(space.ndofs)
    mesh = space.mesh
    tri_local = space.tri_local[adj_tri]
    if np.any(tri_local < 0):
        raise LayoutError("edge load on an edge whose triangle is outside the space")
    s, ws = gauss_1d(degree)
    tris = mesh.triangles[adj_tri]
    la = np.argmax(tris == edges[:, :1], axis=1)
    lb = np.argmax(tris == edges[:, 1:2], axis=1)
    E, q = len(edges), len(s)
    bary = np.zeros((E, q, 3))
    bary[np.arange(E), :, la] = 1.0 - s
    bary[np.arange(E), :, lb] = s
    N = eval_shape(space.kind, bary)  # (E, q, n)
    xa, xb = mesh.nodes[edges[:, 0]], mesh.nodes[edges[:, 1]]
    pts = xa[:, None, :] * (1.0 - s)[None, :, None] + xb[:, None, :] * s[None, :, None]
    L = np.linalg.norm(xb - xa, axis=1)
    nrm = np.repeat(np.asarray(normals, dtype=float), q, axis=0)
    g = _eval_vector(func, pts[..., 0].ravel(), pts[..., 1].ravel(), t, space.components,
                     nrm[:, 0], nrm[:, 1]).reshape(E, q, -1)
    loc = np.einsum("e,q,eqc,eqn->ecn", L, ws, g, N)
    return _scatter(space, loc, tri_local)


def outward_normals(mesh, edges) -> np.ndarray:
    d = mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]]
    n = np.column_stack([d[:, 1], -d[:, 0]])
    return n / np.linalg.norm(n, axis=1)[:, None]


def boundary_load(space: Space, sides, func, t: float = 0.0) -> np.ndarray:
    """Load on outer-boundary edges of ``sides`` that belong to the space's region."""
    mesh = space.mesh
    sel = np.isin(mesh.boundary_sides, list(sides)) & np.isin(mesh.strip[mesh.boundary_tri], space.strips)
    edges = mesh.boundary_edges[sel]
    return edge_load(space, edges, mesh.boundary_tri[sel], outward_normals(mesh, edges), func, t)


def interface_load(space: Space, tag: str, func, t: float = 0.0) -> np.ndarray:
    """Load on interface ``tag``, integrated with the flow-side triangles; normal points into the structure."""
    mesh = space.mesh
    mesh.spec.interface_level(tag)
    sel = mesh.interface_tags == tag
    return edge_load(space, mesh.interface_edges[sel], mesh.interface_tri_flow[sel], mesh.interface_normals[sel], func, t)


def assemble_linear(spec: FormSpec, layout: DofLayout, integrand, time: float | None = None) -> np.ndarray:
    """Global load vector of one linear form (aliases merged, Dirichlet rows dropped)."""
    t = spec.time if time is None else time
    space = layout.space(spec.test)
    if spec.kind == "volume_load":
        b = volume_load(space, integrand, t)
    elif spec.kind == "mass_source_load":
        if spec.test != "p":
            raise LayoutError("mass_source_load tests against the pressure space")
        b = volume_load(space, integrand, t)
    elif spec.kind == "boundary_load":
        sides = spec.region.split("+") if spec.region else ["bottom", "right", "top", "left"]
        b = boundary_load(space, sides, integrand, t)
    elif spec.kind == "interface_load":
        b = interface_load(space, spec.region, integrand, t)
    else:
        raise ValueError(f"{spec.kind} is not a linear form")
    return spec.coefficient * (_field_block(layout, spec.test).T @ b)


def divergence_matrix(velocity: Space, pressure: Space) -> sp.csr_matrix:
    """B with ``(B u)_i = (div u, psi_i)``."""
    return assemble_matrix("div_pressure", velocity, pressure)


def divergence_residual(u: FEField, pressure: Space) -> np.ndarray:
    return divergence_matrix(u.space, pressure) @ u.coeffs
