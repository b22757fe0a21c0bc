import dataclasses
import math

import numpy as np
import pytest
from conftest import channel_spec, square_spec

from fsi_fem.mesh import GeometrySpec, MeshError, build_structured_mesh, interface_nodes, mesh_for_h, validate, write_mesh_csv


def test_smallest_grid():
    m = build_structured_mesh(square_spec(), 1, [1])
    assert m.n_nodes == 4 and m.n_triangles == 2
    assert m.h == pytest.approx(math.sqrt(2.0), abs=1e-15)


def test_channel_interface_nodes_at_levels():
    m = build_structured_mesh(channel_spec(), 4, [1, 2, 1])
    for tag, level in (("gamma2", 0.25), ("gamma1", 0.75)):
        nodes = interface_nodes(m, tag)
        assert np.all(m.nodes[nodes, 1] == level)
    assert set(np.round(m.y_lines, 12)) >= {0.25, 0.75}


def test_counting_formula():
    spec = GeometrySpec(0.0, 1.0, (0.0, 0.25, 0.75, 1.0), ("solid", "fluid", "solid"), {}, ("a", "b"))
    m = build_structured_mesh(spec, 8, [2, 4, 2])
    assert m.n_nodes == 9 * 9
    assert m.n_triangles == 2 * 8 * 8


def test_interface_nodes_periodic_vs_not():
    assert len(interface_nodes(build_structured_mesh(channel_spec(True), 4, [1, 2, 1]), "gamma1")) == 4
    assert len(interface_nodes(build_structured_mesh(channel_spec(False), 4, [1, 2, 1]), "gamma1")) == 5


def test_interface_nodes_errors():
    m = build_structured_mesh(square_spec(), 2, [2])
    with pytest.raises(MeshError):
        interface_nodes(m, "gamma")
    with pytest.raises(MeshError):
        interface_nodes(build_structured_mesh(channel_spec(), 2, [1, 1, 1]), "nope")


@pytest.mark.parametrize("nx, ny", [(0, [1]), (2, [0])])
def test_rejects_empty(nx, ny):
    with pytest.raises(MeshError):
        build_structured_mesh(square_spec(), nx, ny)


def test_spec_validation():
    with pytest.raises(MeshError):
        GeometrySpec(0.0, 1.0, (0.0, 0.5, 0.4), ("fluid", "solid"), {}, ("g",))
    with pytest.raises(MeshError):
        GeometrySpec(0.0, 1.0, (0.0, 1.0), ("fluid",), {"left": "periodic_x"})
    with pytest.raises(MeshError):
        GeometrySpec(0.0, 1.0, (0.0, 0.5, 1.0), ("fluid", "fluid"), {}, ("g",))


def test_validate_clean_mesh(channel_mesh):
    rep = validate(channel_mesh)
    assert rep.ok, rep.failures
    assert rep.min_angle == pytest.approx(45.0 * (1 - 0.0), rel=0.5)


def test_validate_flags_clockwise(channel_mesh):
    tri = channel_mesh.triangles.copy()
    tri[3] = tri[3, [0, 2, 1]]
    rep = validate(dataclasses.replace(channel_mesh, triangles=tri))
    assert any(f.startswith("orientation") for f in rep.failures)


def test_validate_flags_misaligned_interface(channel_mesh):
    other = channel_spec(periodic=True, levels=(0.0, 0.3, 0.75, 1.0))
    rep = validate(dataclasses.replace(channel_mesh, spec=other))
    assert any(f.startswith("alignment") for f in rep.failures)


@pytest.mark.parametrize("nx, ny", [(3, [1, 2, 1]), (5, [2, 3, 2]), (8, [2, 4, 2])])
def test_area_sum_and_positive(nx, ny):
    m = build_structured_mesh(channel_spec(), nx, ny)
    assert np.all(m.signed_areas() > 0)
    assert abs(m.signed_areas().sum() - 1.0) <= 1e-12


def test_refinement_halves_h():
    spec = channel_spec()
    a = build_structured_mesh(spec, 4, [1, 2, 1])
    b = build_structured_mesh(spec, 8, [2, 4, 2])
    assert b.h == pytest.approx(a.h / 2, rel=1e-14)


def test_interface_edges_shared_flow_structure(channel_mesh):
    m = channel_mesh
    roles = np.array(m.spec.strip_roles)
    assert np.all(roles[m.strip[m.interface_tri_flow]] == "fluid")
    assert np.all(roles[m.strip[m.interface_tri_structure]] == "solid")
    # normals point from flow into structure
    for tag, sign in (("gamma1", 1.0), ("gamma2", -1.0)):
        n = m.interface_normals[m.interface_tags == tag]
        assert np.allclose(n, [0.0, sign])


def test_periodic_pairs(channel_mesh):
    m = channel_mesh
    mst, slv = m.periodic_pairs.T
    assert np.all(m.nodes[mst, 1] == m.nodes[slv, 1])
    assert np.all(m.nodes[mst, 0] == 0.0) and np.all(m.nodes[slv, 0] == 1.0)


def test_boundary_normals_outward():
    from fsi_fem.forms import outward_normals

    m = build_structured_mesh(channel_spec(), 3, [1, 1, 1])
    n = outward_normals(m, m.boundary_edges)
    mid = 0.5 * (m.nodes[m.boundary_edges[:, 0]] + m.nodes[m.boundary_edges[:, 1]])
    assert np.all(np.einsum("ij,ij->i", n, mid - [0.5, 0.5]) > 0)


def test_mesh_for_h_and_csv(tmp_path):
    m = mesh_for_h(channel_spec(), 0.125)
    assert m.nx == 8 and len(m.y_lines) == 9
    write_mesh_csv(m, tmp_path / "n.csv", tmp_path / "t.csv")
    assert (tmp_path / "n.csv").read_text().splitlines()[0] == "id,x,y"
    assert len((tmp_path / "t.csv").read_text().splitlines()) == m.n_triangles + 1
