"""Structured, interface-fitted triangulations of horizontally layered rectangles.

The domain ``[x_min, x_max] x [y_levels[0], y_levels[-1]]`` is cut into
horizontal strips at ``y_levels``.  Every strip carries a role (``fluid``,
``solid``, ``heat`` or ``wave``) and every internal level is an interface
that the mesh resolves exactly.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FLOW_ROLES = ("fluid", "heat")
STRUCTURE_ROLES = ("solid", "wave")
SIDES = ("bottom", "right", "top", "left")
BOUNDARY_KINDS = ("neumann_traction", "dirichlet_zero", "periodic_x")


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class GeometrySpec:
    """Layered rectangle with per-strip roles and per-side boundary kinds."""

    x_min: float
    x_max: float
    y_levels: tuple[float, ...]
    strip_roles: tuple[str, ...]
    boundary_conditions: dict[str, str] = field(default_factory=dict)
    interface_tags: tuple[str, ...] = ()

    def __post_init__(self):
        levels = tuple(float(y) for y in self.y_levels)
        object.__setattr__(self, "y_levels", levels)
        object.__setattr__(self, "strip_roles", tuple(self.strip_roles))
        object.__setattr__(self, "interface_tags", tuple(self.interface_tags))
        bcs = {side: "neumann_traction" for side in SIDES}
        bcs.update(self.boundary_conditions)
        object.__setattr__(self, "boundary_conditions", bcs)

        if not self.x_max > self.x_min:
            raise MeshError("x_max must exceed x_min")
        if len(levels) < 2 or np.any(np.diff(levels) <= 0):
            raise MeshError("y_levels must be strictly increasing with at least two entries")
        if len(self.strip_roles) != self.n_strips:
            raise MeshError(f"expected {self.n_strips} strip roles, got {len(self.strip_roles)}")
        for role in self.strip_roles:
            if role not in FLOW_ROLES + STRUCTURE_ROLES:
                raise MeshError(f"unknown strip role {role!r}")
        for side, kind in bcs.items():
            if side not in SIDES:
                raise MeshError(f"unknown side {side!r}")
            if kind not in BOUNDARY_KINDS:
                raise MeshError(f"unknown boundary kind {kind!r} on side {side!r}")
        if (bcs["left"] == "periodic_x") != (bcs["right"] == "periodic_x"):
            raise MeshError("periodic_x must be set on both vertical sides or on neither")
        if bcs["top"] == "periodic_x" or bcs["bottom"] == "periodic_x":
            raise MeshError("periodic_x only applies to the vertical sides")
        if len(self.interface_tags) != self.n_strips - 1:
            raise MeshError("one interface tag is required per internal y-level")
        if len(set(self.interface_tags)) != len(self.interface_tags):
            raise MeshError("interface tags must be unique")
        for below, above in zip(self.strip_roles[:-1], self.strip_roles[1:]):
            if (below in FLOW_ROLES) == (above in FLOW_ROLES):
                raise MeshError("every interface must separate a flow strip from a structure strip")

    @property
    def n_strips(self) -> int:
        return len(self.y_levels) - 1

    @property
    def periodic(self) -> bool:
        return self.boundary_conditions["left"] == "periodic_x"

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    def strip_height(self, s: int) -> float:
        return self.y_levels[s + 1] - self.y_levels[s]

    def strips_with_roles(self, roles) -> tuple[int, ...]:
        return tuple(s for s, r in enumerate(self.strip_roles) if r in roles)

    @property
    def flow_strips(self) -> tuple[int, ...]:
        return self.strips_with_roles(FLOW_ROLES)

    @property
    def structure_strips(self) -> tuple[int, ...]:
        return self.strips_with_roles(STRUCTURE_ROLES)

    def interface_level(self, tag: str) -> float:
        try:
            return self.y_levels[1 + self.interface_tags.index(tag)]
        except ValueError:
            raise MeshError(f"unknown interface tag {tag!r}") from None


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation plus tagging.

    Boundary edges are stored counterclockwise along the outer boundary, so the
    outward normal of edge ``(a, b)`` is the tangent rotated clockwise.
    Interface normals point from the flow strip into the structure strip.
    """

    spec: GeometrySpec
    nodes: np.ndarray  # (N, 2)
    triangles: np.ndarray  # (T, 3), counterclockwise
    strip: np.ndarray  # (T,)
    boundary_edges: np.ndarray  # (Eb, 2)
    boundary_sides: np.ndarray  # (Eb,) side names
    boundary_tri: np.ndarray  # (Eb,) adjacent triangle
    interface_edges: np.ndarray  # (Ei, 2)
    interface_tags: np.ndarray  # (Ei,)
    interface_normals: np.ndarray  # (Ei, 2)
    interface_tri_flow: np.ndarray  # (Ei,)
    interface_tri_structure: np.ndarray  # (Ei,)
    periodic_pairs: np.ndarray  # (P, 2) master, slave
    node_ij: np.ndarray  # (N, 2) structured grid indices
    x_lines: np.ndarray
    y_lines: np.ndarray
    h: float

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def nx(self) -> int:
        return len(self.x_lines) - 1

    def triangle_coords(self, tri=None) -> np.ndarray:
        t = self.triangles if tri is None else self.triangles[tri]
        return self.nodes[t]

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def triangles_in(self, strips) -> np.ndarray:
        return np.flatnonzero(np.isin(self.strip, np.asarray(strips, dtype=int)))

    def periodic_master(self) -> np.ndarray:
        """Map every node to its periodic master (identity without periodicity)."""
        master = np.arange(self.n_nodes)
        if len(self.periodic_pairs):
            master[self.periodic_pairs[:, 1]] = self.periodic_pairs[:, 0]
        return master

    def cell_of_row(self) -> np.ndarray:
        """Strip index of every grid row."""
        rows = np.empty(len(self.y_lines) - 1, dtype=int)
        mid = 0.5 * (self.y_lines[1:] + self.y_lines[:-1])
        rows[:] = np.searchsorted(self.spec.y_levels, mid) - 1
        return rows


def build_structured_mesh(spec: GeometrySpec, nx: int, ny_per_strip) -> Mesh:
    """Uniform columns, per-strip uniform rows, every cell cut lower-left to upper-right."""
    ny_per_strip = [int(n) for n in ny_per_strip]
    if int(nx) != nx or nx < 1:
        raise MeshError("nx must be a positive integer")
    nx = int(nx)
    if len(ny_per_strip) != spec.n_strips:
        raise MeshError(f"expected {spec.n_strips} ny entries, got {len(ny_per_strip)}")
    if any(n < 1 for n in ny_per_strip):
        raise MeshError("every strip needs at least one row of cells")
    if spec.periodic and nx < 2:
        raise MeshError("periodic meshes need at least two columns")

    x_lines = np.linspace(spec.x_min, spec.x_max, nx + 1)
    pieces = [np.array([spec.y_levels[0]])]
    row_strip = []
    level_rows = [0]
    for s, n in enumerate(ny_per_strip):
        pieces.append(np.linspace(spec.y_levels[s], spec.y_levels[s + 1], n + 1)[1:])
        row_strip += [s] * n
        level_rows.append(level_rows[-1] + n)
    y_lines = np.concatenate(pieces)
    # pin the levels exactly so interface nodes sit on them bit for bit
    y_lines[level_rows] = spec.y_levels
    row_strip = np.array(row_strip)
    ny = len(y_lines) - 1

    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    ii, jj = ii.ravel(), jj.ravel()
    nodes = np.column_stack([x_lines[ii], y_lines[jj]])
    node_ij = np.column_stack([ii, jj])

    def nid(i, j):
        return j * (nx + 1) + i

    ci, cj = np.meshgrid(np.arange(nx), np.arange(ny))
    ci, cj = ci.ravel(), cj.ravel()
    ll, lr, ur, ul = nid(ci, cj), nid(ci + 1, cj), nid(ci + 1, cj + 1), nid(ci, cj + 1)
    # cell c -> triangles 2c (lower-right) and 2c+1 (upper-left)
    triangles = np.empty((2 * nx * ny, 3), dtype=int)
    triangles[0::2] = np.column_stack([ll, lr, ur])
    triangles[1::2] = np.column_stack([ll, ur, ul])
    strip = np.repeat(row_strip[cj], 2)

    def lower_right(i, j):
        return 2 * (j * nx + i)

    def upper_left(i, j):
        return 2 * (j * nx + i) + 1

    b_edges, b_sides, b_tri = [], [], []
    i = np.arange(nx)
    b_edges.append(np.column_stack([nid(i, 0), nid(i + 1, 0)]))
    b_sides.append(np.full(nx, "bottom"))
    b_tri.append(lower_right(i, 0))
    b_edges.append(np.column_stack([nid(i + 1, ny), nid(i, ny)]))
    b_sides.append(np.full(nx, "top"))
    b_tri.append(upper_left(i, ny - 1))
    if not spec.periodic:
        j = np.arange(ny)
        b_edges.append(np.column_stack([nid(nx, j), nid(nx, j + 1)]))
        b_sides.append(np.full(ny, "right"))
        b_tri.append(lower_right(nx - 1, j))
        b_edges.append(np.column_stack([nid(0, j + 1), nid(0, j)]))
        b_sides.append(np.full(ny, "left"))
        b_tri.append(upper_left(0, j))

    i_edges, i_tags, i_normals, i_flow, i_struct = [], [], [], [], []
    for k, tag in enumerate(spec.interface_tags):
        j = level_rows[k + 1]
        below, above = spec.strip_roles[k], spec.strip_roles[k + 1]
        i_edges.append(np.column_stack([nid(i, j), nid(i + 1, j)]))
        i_tags.append(np.full(nx, tag, dtype=object))
        t_below, t_above = upper_left(i, j - 1), lower_right(i, j)
        if below in FLOW_ROLES:
            normal, t_flow, t_struct = (0.0, 1.0), t_below, t_above
        else:
            normal, t_flow, t_struct = (0.0, -1.0), t_above, t_below
        i_normals.append(np.tile(normal, (nx, 1)))
        i_flow.append(t_flow)
        i_struct.append(t_struct)

    if spec.periodic:
        j = np.arange(ny + 1)
        periodic_pairs = np.column_stack([nid(0, j), nid(nx, j)])
    else:
        periodic_pairs = np.zeros((0, 2), dtype=int)

    def cat(parts, shape, dtype):
        return np.concatenate(parts) if parts else np.zeros(shape, dtype=dtype)

    mesh = Mesh(
        spec=spec,
        nodes=nodes,
        triangles=triangles,
        strip=strip,
        boundary_edges=cat(b_edges, (0, 2), int),
        boundary_sides=cat(b_sides, (0,), "<U6"),
        boundary_tri=cat(b_tri, (0,), int),
        interface_edges=cat(i_edges, (0, 2), int),
        interface_tags=cat(i_tags, (0,), object),
        interface_normals=cat(i_normals, (0, 2), float),
        interface_tri_flow=cat(i_flow, (0,), int),
        interface_tri_structure=cat(i_struct, (0,), int),
        periodic_pairs=periodic_pairs,
        node_ij=node_ij,
        x_lines=x_lines,
        y_lines=y_lines,
        h=0.0,
    )
    return dataclasses.replace(mesh, h=_max_edge_length(mesh))


def _max_edge_length(mesh: Mesh) -> float:
    p = mesh.nodes[mesh.triangles]
    lengths = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
    return float(lengths.max())


def interface_nodes(mesh: Mesh, tag: str) -> np.ndarray:
    """Node indices on interface ``tag`` sorted by x, periodic slaves dropped."""
    mesh.spec.interface_level(tag)  # raises for unknown tags
    sel = mesh.interface_tags == tag
    nodes = np.unique(mesh.interface_edges[sel])
    if len(mesh.periodic_pairs):
        nodes = np.setdiff1d(nodes, mesh.periodic_pairs[:, 1])
    return nodes[np.argsort(mesh.nodes[nodes, 0], kind="stable")]


@dataclass
class MeshReport:
    min_area: float
    max_area: float
    min_angle: float
    total_area: float
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


def validate(mesh: Mesh, tol: float = 1e-12) -> MeshReport:
    """Collect geometric and tagging diagnostics; never raises."""
    failures = []
    spec = mesh.spec
    areas = mesh.signed_areas()
    if np.any(areas <= 0):
        bad = np.flatnonzero(areas <= 0)
        failures.append(f"orientation: {len(bad)} triangle(s) with nonpositive signed area, first {bad[0]}")

    p = mesh.nodes[mesh.triangles]
    angles = []
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cosang = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
    min_angle = float(np.min(angles)) if len(areas) else 0.0

    domain_area = spec.length * (spec.y_levels[-1] - spec.y_levels[0])
    total = float(np.abs(areas).sum())
    if abs(total - domain_area) > tol * domain_area * 10:
        failures.append(f"area: triangles cover {total!r}, domain is {domain_area!r}")

    # interface edges on their y-level, shared by one flow and one structure triangle
    edge_owner: dict[tuple[int, int], list[int]] = {}
    for t, tri in enumerate(mesh.triangles):
        for k in range(3):
            a, b = tri[k], tri[(k + 1) % 3]
            edge_owner.setdefault((min(a, b), max(a, b)), []).append(t)
    for tag in spec.interface_tags:
        level = spec.interface_level(tag)
        sel = np.flatnonzero(mesh.interface_tags == tag)
        if len(sel) == 0:
            failures.append(f"alignment: interface {tag} has no edges")
            continue
        ys = mesh.nodes[mesh.interface_edges[sel], 1]
        if np.any(np.abs(ys - level) > tol):
            failures.append(f"alignment: interface {tag} edges are off the level y={level}")
        for e in sel:
            a, b = mesh.interface_edges[e]
            owners = edge_owner.get((min(a, b), max(a, b)), [])
            roles = sorted(spec.strip_roles[mesh.strip[t]] in FLOW_ROLES for t in owners)
            if roles != [False, True]:
                failures.append(f"interface: edge {e} on {tag} is not shared by one flow and one structure triangle")
                break
    for s in range(1, spec.n_strips):
        if not np.any(np.abs(mesh.y_lines - spec.y_levels[s]) <= tol):
            failures.append(f"alignment: level y={spec.y_levels[s]} is not a grid line")

    if len(mesh.periodic_pairs):
        m, s = mesh.periodic_pairs[:, 0], mesh.periodic_pairs[:, 1]
        if np.any(mesh.nodes[m, 1] != mesh.nodes[s, 1]):
            failures.append("periodic: paired nodes differ in y")
        if np.any(np.abs(mesh.nodes[m, 0] - spec.x_min) > tol) or np.any(np.abs(mesh.nodes[s, 0] - spec.x_max) > tol):
            failures.append("periodic: paired nodes are not on x_min/x_max")

    return MeshReport(
        min_area=float(areas.min()) if len(areas) else 0.0,
        max_area=float(areas.max()) if len(areas) else 0.0,
        min_angle=min_angle,
        total_area=total,
        failures=failures,
    )


def write_mesh_csv(mesh: Mesh, nodes_path, triangles_path) -> None:
    with open(Path(nodes_path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y"])
        for k, (x, y) in enumerate(mesh.nodes):
            w.writerow([k, repr(float(x)), repr(float(y))])
    with open(Path(triangles_path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "n0", "n1", "n2", "strip"])
        for k, (tri, s) in enumerate(zip(mesh.triangles, mesh.strip)):
            w.writerow([k, *map(int, tri), int(s)])


def rows_for(spec: GeometrySpec, h: float) -> list[int]:
    """Rows per strip so that row height does not exceed ``h`` (up to rounding)."""
    return [max(1, int(np.ceil(spec.strip_height(s) / h - 1e-9))) for s in range(spec.n_strips)]


def mesh_for_h(spec: GeometrySpec, h: float) -> Mesh:
    nx = max(1, int(round(spec.length / h)))
    return build_structured_mesh(spec, nx, rows_for(spec, h))
