"""Function spaces on mesh regions and the coupled DOF layout.

A :class:`Space` numbers the scalar DOFs of one element family on a set of
strips (vertices, P2 edge midpoints, bubbles) with periodic identification
applied.  Vector spaces block their components: DOF ``c * n_scalar + s``.

A :class:`DofLayout` stacks the fields of a coupled problem and assigns each
field DOF a global unknown.  Structure velocity DOFs on an interface are
aliased to the matching flow velocity DOF, Dirichlet DOFs get ``-1``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import P2_EDGES, ElementKind, eval_grad, eval_shape, lagrange_points, map_to_physical, quadrature
from .mesh import Mesh, MeshError

VERTEX, EDGE, BUBBLE = 0, 1, 2


class LayoutError(ValueError):
    pass


class Space:
    """Scalar or vector Lagrange space of one element kind over ``strips``."""

    def __init__(self, mesh: Mesh, kind: ElementKind, strips, components: int = 1):
        self.mesh = mesh
        self.kind = ElementKind(kind)
        self.strips = tuple(int(s) for s in strips)
        self.components = int(components)
        self.tri = mesh.triangles_in(self.strips)
        if len(self.tri) == 0:
            raise LayoutError(f"no triangles in strips {self.strips}")
        self._number()

    def _number(self):
        mesh = self.mesh
        tris = mesh.triangles[self.tri]
        master = mesh.periodic_master()
        verts = master[tris]
        used = np.unique(verts)
        vdof = np.full(mesh.n_nodes, -1)
        vdof[used] = np.arange(len(used))
        cols = [vdof[verts]]
        keys = [(VERTEX, int(n)) for n in used]
        points = [mesh.nodes[used]]
        kinds = [np.full(len(used), VERTEX)]
        n = len(used)
        self.vertex_dof = vdof

        if self.kind is ElementKind.P2:
            ij = mesh.node_ij[tris]  # (T, 3, 2)
            mid_keys = []
            for a, b in P2_EDGES:
                k = ij[:, a] + ij[:, b]  # doubled grid coordinates of the midpoint
                if mesh.spec.periodic:
                    k[:, 0] = np.where(k[:, 0] == 2 * mesh.nx, 0, k[:, 0])
                mid_keys.append(k)
            mk = np.stack(mid_keys, axis=1).reshape(-1, 2)
            uniq, inv = np.unique(mk, axis=0, return_inverse=True)
            inv = inv.reshape(-1)
            cols.append(n + inv.reshape(len(tris), 3))
            keys += [(EDGE, int(a), int(b)) for a, b in uniq]
            xs = np.interp(uniq[:, 0] / 2.0, np.arange(mesh.nx + 1), mesh.x_lines)
            ys = np.interp(uniq[:, 1] / 2.0, np.arange(len(mesh.y_lines)), mesh.y_lines)
            points.append(np.column_stack([xs, ys]))
            kinds.append(np.full(len(uniq), EDGE))
            n += len(uniq)
        elif self.kind is ElementKind.P1B:
            nb = len(tris)
            cols.append((n + np.arange(nb))[:, None])
            keys += [(BUBBLE, int(t)) for t in self.tri]
            points.append(mesh.nodes[tris].mean(axis=1))
            kinds.append(np.full(nb, BUBBLE))
            n += nb

        self.cell_dofs = np.concatenate(cols, axis=1)
        self.n_scalar = n
        self.dof_keys = keys
        self.key_index = {k: i for i, k in enumerate(keys)}
        self.dof_points = np.concatenate(points)
        self.dof_kind = np.concatenate(kinds)
        self.tri_local = np.full(mesh.n_triangles, -1)
        self.tri_local[self.tri] = np.arange(len(self.tri))

    @property
    def n_local(self) -> int:
        return self.kind.n_local

    @property
    def ndofs(self) -> int:
        return self.components * self.n_scalar

    def vector_cell_dofs(self) -> np.ndarray:
        """(T, components * n_local) global DOFs, component-blocked."""
        return np.concatenate([self.cell_dofs + c * self.n_scalar for c in range(self.components)], axis=1)

    def _edge_scalar_dofs(self, edges: np.ndarray) -> np.ndarray:
        mesh = self.mesh
        master = mesh.periodic_master()
        out = []
        for a, b in edges:
            out.append(self.key_index[(VERTEX, int(master[a]))])
            out.append(self.key_index[(VERTEX, int(master[b]))])
            if self.kind is ElementKind.P2:
                k = mesh.node_ij[a] + mesh.node_ij[b]
                if mesh.spec.periodic and k[0] == 2 * mesh.nx:
                    k = (0, k[1])
                out.append(self.key_index[(EDGE, int(k[0]), int(k[1]))])
        return np.unique(np.array(out, dtype=int))

    def trace_scalar_dofs(self, tag: str) -> np.ndarray:
        """Scalar DOFs on interface ``tag`` (vertices and P2 midpoints), sorted by x."""
        self.mesh.spec.interface_level(tag)
        edges = self.mesh.interface_edges[self.mesh.interface_tags == tag]
        dofs = self._edge_scalar_dofs(edges)
        return dofs[np.argsort(self.dof_points[dofs, 0], kind="stable")]

    def boundary_scalar_dofs(self, sides) -> np.ndarray:
        mesh = self.mesh
        sel = np.isin(mesh.boundary_sides, list(sides)) & np.isin(mesh.strip[mesh.boundary_tri], self.strips)
        if not np.any(sel):
            return np.zeros(0, dtype=int)
        return self._edge_scalar_dofs(mesh.boundary_edges[sel])

    def expand(self, scalar_dofs) -> np.ndarray:
        """Scalar DOFs -> all component DOFs, component-blocked."""
        s = np.asarray(scalar_dofs, dtype=int)
        return np.concatenate([s + c * self.n_scalar for c in range(self.components)])

    def quad_data(self, degree: int) -> "QuadData":
        """Cached quadrature tables over the region for rules of ``degree``."""
        cache = self.__dict__.setdefault("_quad_cache", {})
        if degree not in cache:
            cache[degree] = QuadData.build(self, degree)
        return cache[degree]


@dataclass
class QuadData:
    N: np.ndarray  # (q, n) shape values
    grads: np.ndarray  # (T, n, q, 2) physical shape gradients
    weights: np.ndarray  # (T, q)
    points: np.ndarray  # (T, q, 2)

    @classmethod
    def build(cls, space: "Space", degree: int) -> "QuadData":
        rule = quadrature(degree)
        coords = space.mesh.nodes[space.mesh.triangles[space.tri]]
        m = map_to_physical(coords, rule)
        G = eval_grad(space.kind, rule.points)  # (q, n, 2)
        g = np.einsum("qnb,tba->tnqa", G, m.inv_jacobian, optimize=True)
        return cls(eval_shape(space.kind, rule.points), np.ascontiguousarray(g), m.weights, m.points)

    @property
    def x(self):
        return self.points[..., 0].ravel()

    @property
    def y(self):
        return self.points[..., 1].ravel()


def evaluate_quadrature(space: Space, coeffs: np.ndarray, degree: int):
    """Values (T, q, C) and gradients (T, q, C, 2) at the quadrature points of every region triangle."""
    qd = space.quad_data(degree)
    T, n, q, _ = qd.grads.shape
    cc = np.asarray(coeffs).reshape(space.components, space.n_scalar)[:, space.cell_dofs]  # (C, T, n)
    vals = np.moveaxis(cc @ qd.N.T, 0, -1)  # (T, q, C)
    gr = np.matmul(cc.transpose(1, 0, 2), qd.grads.reshape(T, n, q * 2))  # (T, C, q*2)
    grads = gr.reshape(T, space.components, q, 2).transpose(0, 2, 1, 3)
    return vals, grads


@dataclass
class FEField:
    """Coefficient vector over a :class:`Space` (includes constrained DOFs)."""

    space: Space
    coeffs: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.ndofs,):
            raise LayoutError(f"field {self.name!r}: expected {self.space.ndofs} coefficients, got {self.coeffs.shape}")

    def component(self, c: int) -> np.ndarray:
        n = self.space.n_scalar
        return self.coeffs[c * n : (c + 1) * n]


def evaluate(space: Space, coeffs: np.ndarray, bary, tri_local=None):
    """Values (T, q, C) and physical gradients (T, q, C, 2) at barycentric points of region triangles."""
    bary = np.atleast_2d(bary)
    if tri_local is None:
        tri_local = np.arange(len(space.tri))
    tri_local = np.atleast_1d(tri_local)
    N = eval_shape(space.kind, bary)  # (q, n)
    G = eval_grad(space.kind, bary)  # (q, n, 2)
    coords = space.mesh.nodes[space.mesh.triangles[space.tri[tri_local]]]
    mapped = _inverse_jacobians(coords)
    gphys = np.einsum("qnb,tba->tqna", G, mapped)
    local = space.cell_dofs[tri_local]  # (T, n)
    C = space.components
    cc = coeffs.reshape(C, space.n_scalar)[:, local]  # (C, T, n)
    vals = np.einsum("qn,ctn->tqc", N, cc)
    grads = np.einsum("tqna,ctn->tqca", gphys, cc)
    return vals, grads


def _inverse_jacobians(coords):
    J = np.stack([coords[:, 1] - coords[:, 0], coords[:, 2] - coords[:, 0]], axis=-1)
    return np.linalg.inv(J)


def physical_points(space: Space, bary) -> np.ndarray:
    coords = space.mesh.nodes[space.mesh.triangles[space.tri]]
    lam = np.atleast_2d(bary)
    return np.einsum("qk,tka->tqa", lam, coords)


def eval_field(f: FEField, triangle: int, bary):
    """Value (C,) and gradient (C, 2) of ``f`` at one point of mesh triangle ``triangle``."""
    loc = f.space.tri_local[int(triangle)]
    if loc < 0:
        raise LayoutError(f"triangle {triangle} is outside the region of field {f.name!r}")
    vals, grads = evaluate(f.space, f.coeffs, np.asarray(bary, dtype=float)[None], [loc])
    return vals[0, 0], grads[0, 0]


def interpolate(func, space: Space, t: float = 0.0, name: str = "") -> FEField:
    """Lagrange interpolant; bubble coefficients are zero.

    ``func(x, y, t)`` returns shape ``(n,)`` for scalar or ``(n, C)`` for vector spaces.
    """
    mask = space.dof_kind != BUBBLE
    pts = space.dof_points[mask]
    vals = np.asarray(func(pts[:, 0], pts[:, 1], t), dtype=float).reshape(len(pts), -1)
    if vals.shape[1] != space.components:
        raise LayoutError(f"function returned {vals.shape[1]} components, space has {space.components}")
    coeffs = np.zeros((space.components, space.n_scalar))
    coeffs[:, mask] = vals.T
    return FEField(space, coeffs.ravel(), name)


def trace_values(f: FEField, tag: str) -> np.ndarray:
    """Values on the interface points of ``tag`` (nodes and P2 midpoints) sorted by x, shape (n, C)."""
    dofs = f.space.trace_scalar_dofs(tag)
    return f.coeffs.reshape(f.space.components, -1)[:, dofs].T


def write_field_csv(f: FEField, path) -> None:
    """Nodal values per mesh node of the field's region."""
    space = f.space
    mesh = space.mesh
    master = mesh.periodic_master()
    nodes = np.unique(mesh.triangles[space.tri])
    vals = f.coeffs.reshape(space.components, -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "x", "y"] + [f"c{c}" for c in range(space.components)])
        for node in nodes:
            d = space.vertex_dof[master[node]]
            x, y = mesh.nodes[node]
            w.writerow([int(node), repr(float(x)), repr(float(y))] + [repr(float(v)) for v in vals[:, d]])


FSI_ELEMENTS = {
    (ElementKind.P1B, ElementKind.P1, ElementKind.P1B),
    (ElementKind.P2, ElementKind.P1, ElementKind.P2),
}
SCALAR_ELEMENTS = {(ElementKind.P1, ElementKind.P1), (ElementKind.P2, ElementKind.P2)}


@dataclass
class DofLayout:
    """Global numbering of the coupled unknowns ``(w, u, p)``; ``eta`` shares the ``w`` space."""

    mesh: Mesh
    physics: str  # "stokes" or "heat"
    flow: Space
    structure: Space
    pressure: Space | None
    flow_map: np.ndarray
    structure_map: np.ndarray
    pressure_map: np.ndarray
    aliases: np.ndarray  # (A, 2): structure dof, flow dof
    dirichlet: dict[str, np.ndarray] = field(default_factory=dict)
    n_unknowns: int = 0

    def space(self, field_id: str) -> Space:
        if field_id in ("u", "flow"):
            return self.flow
        if field_id in ("w", "eta", "structure"):
            return self.structure
        if field_id in ("p", "pressure") and self.pressure is not None:
            return self.pressure
        raise LayoutError(f"unknown field {field_id!r}")

    @property
    def field_sizes(self) -> tuple[int, int, int]:
        np_ = self.pressure.ndofs if self.pressure is not None else 0
        return self.structure.ndofs, self.flow.ndofs, np_

    def stacked_map(self) -> np.ndarray:
        """Global index of every entry of the stacked vector ``[w; u; p]``."""
        return np.concatenate([self.structure_map, self.flow_map, self.pressure_map])

    def prolongation(self, stacked_map=None) -> sp.csr_matrix:
        """Sparse P with ``stacked = P @ unknowns`` (zero at constrained entries)."""
        m = self.stacked_map() if stacked_map is None else stacked_map
        rows = np.flatnonzero(m >= 0)
        n = int(m.max()) + 1 if len(rows) else 0
        return sp.csr_matrix((np.ones(len(rows)), (rows, m[rows])), shape=(len(m), n))

    def split(self, stacked: np.ndarray):
        nw, nu, _ = self.field_sizes
        return stacked[:nw], stacked[nw : nw + nu], stacked[nw + nu :]

    def audit(self) -> dict:
        nw, nu, np_ = self.field_sizes
        n_dir = sum(len(v) for v in self.dirichlet.values())
        # aliases onto Dirichlet flow dofs are counted once, as Dirichlet
        aliased_free = int(np.sum(self.flow_map[self.aliases[:, 1]] >= 0)) if len(self.aliases) else 0
        expected = nw + nu + np_ - aliased_free - n_dir
        return {"total_field_dofs": nw + nu + np_, "aliases": len(self.aliases), "dirichlet": n_dir,
                "expected_unknowns": expected, "n_unknowns": self.n_unknowns}


def build_layout(mesh: Mesh, velocity_kind, pressure_kind, structure_kind, components: int) -> DofLayout:
    vk = ElementKind(velocity_kind)
    sk = ElementKind(structure_kind)
    pk = ElementKind(pressure_kind) if pressure_kind is not None else None
    if vk.trace_degree != sk.trace_degree:
        raise LayoutError(f"{vk.value} velocity and {sk.value} structure spaces do not share interface traces")
    if pk is not None:
        if (vk, pk, sk) not in FSI_ELEMENTS:
            raise LayoutError(f"unsupported FSI element triple {(vk.value, pk.value, sk.value)}")
        physics = "stokes"
    else:
        if (vk, sk) not in SCALAR_ELEMENTS:
            raise LayoutError(f"unsupported heat-wave element pair {(vk.value, sk.value)}")
        physics = "heat"
    if components not in (1, 2):
        raise LayoutError("components must be 1 or 2")
    spec = mesh.spec
    if not spec.flow_strips or not spec.structure_strips:
        raise MeshError("the geometry needs at least one flow strip and one structure strip")

    flow = Space(mesh, vk, spec.flow_strips, components)
    struct = Space(mesh, sk, spec.structure_strips, components)
    pres = Space(mesh, pk, spec.flow_strips, 1) if pk is not None else None

    dir_sides = [s for s, kind in spec.boundary_conditions.items() if kind == "dirichlet_zero"]
    dirichlet = {
        "u": flow.expand(flow.boundary_scalar_dofs(dir_sides)),
        "w": struct.expand(struct.boundary_scalar_dofs(dir_sides)),
    }

    flow_map = np.arange(flow.ndofs)
    flow_map[dirichlet["u"]] = -1
    free = flow_map >= 0
    flow_map[free] = np.arange(int(free.sum()))
    n = int(free.sum())

    alias_pairs = []
    for tag in spec.interface_tags:
        s_dofs = struct.trace_scalar_dofs(tag)
        f_dofs = np.array([flow.key_index[struct.dof_keys[d]] for d in s_dofs], dtype=int)
        alias_pairs.append(np.column_stack([struct.expand(s_dofs), flow.expand(f_dofs)]))
    aliases = np.concatenate(alias_pairs) if alias_pairs else np.zeros((0, 2), dtype=int)

    struct_map = np.full(struct.ndofs, -2)
    struct_map[aliases[:, 0]] = flow_map[aliases[:, 1]]
    struct_map[dirichlet["w"]] = -1
    own = struct_map == -2
    struct_map[own] = n + np.arange(int(own.sum()))
    n += int(own.sum())

    if pres is not None:
        pres_map = n + np.arange(pres.ndofs)
        n += pres.ndofs
    else:
        pres_map = np.zeros(0, dtype=int)

    return DofLayout(mesh, physics, flow, struct, pres, flow_map, struct_map, pres_map, aliases, dirichlet, n)
