import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plapinv.mesh import (build_interval_mesh, build_rect_mesh, interior_dof_map, read_mesh,
                          write_mesh)


def test_unit_square_counts():
    m = build_rect_mesh(4, 3)
    assert m.n_nodes == 20
    assert m.n_elements == 24
    assert len(m.boundary_nodes) == 2 * (4 + 3)
    assert m.measure == pytest.approx(1.0, abs=1e-14)


@given(nx=st.integers(1, 12), ny=st.integers(1, 12),
       w=st.floats(0.1, 5.0), h=st.floats(0.1, 5.0),
       diag=st.sampled_from(["fixed", "union_jack"]))
@settings(max_examples=40, deadline=None)
def test_rect_mesh_properties(nx, ny, w, h, diag):
    m = build_rect_mesh(nx, ny, w, h, diag)
    assert m.n_elements == 2 * nx * ny
    assert np.all(m.element_volumes > 0)
    assert m.measure == pytest.approx(w * h, rel=1e-12)
    assert len(m.interior_nodes) == (nx - 1) * (ny - 1)
    # every basis gradient set sums to zero on each element
    assert np.allclose(m.basis_gradients.sum(axis=1), 0.0, atol=1e-9 * max(nx / w, ny / h))


def test_basis_gradients_reproduce_linear_function():
    m = build_rect_mesh(3, 5, 2.0, 1.5)
    vals = 2.0 * m.nodes[:, 0] - 3.0 * m.nodes[:, 1]
    g = np.einsum("ea,eai->ei", vals[m.elements], m.basis_gradients)
    assert np.allclose(g, [2.0, -3.0])


def test_union_jack_is_symmetric_under_reflection():
    m = build_rect_mesh(8, 8, diagonal="union_jack")
    edges = {tuple(sorted(map(tuple, np.round(m.nodes[[a, b]], 12))))
             for el in m.elements for a, b in ((el[0], el[1]), (el[1], el[2]), (el[2], el[0]))}
    mirrored = {tuple(sorted(((1 - x0, y0), (1 - x1, y1)))) for (x0, y0), (x1, y1) in edges}
    mirrored = {tuple(tuple(np.round(c, 12)) for c in e) for e in mirrored}
    assert mirrored == edges


def test_fixed_diagonal_is_centrally_symmetric():
    m = build_rect_mesh(6, 6)
    tris = {frozenset(map(tuple, np.round(m.nodes[el], 12))) for el in m.elements}
    rot = {frozenset(tuple(np.round(1.0 - np.array(c), 12)) for c in t) for t in tris}
    assert rot == tris


def test_interval_mesh():
    m = build_interval_mesh(10, 2.0)
    assert m.dim == 1
    assert m.measure == pytest.approx(2.0)
    assert list(m.boundary_nodes) == [0, 10]
    with pytest.raises(ValueError):
        build_interval_mesh(1)


@pytest.mark.parametrize("args", [(0, 3), (3, 0), (2, 2, -1.0)])
def test_rect_mesh_rejects_bad_input(args):
    with pytest.raises(ValueError):
        build_rect_mesh(*args)


def test_bad_diagonal():
    with pytest.raises(ValueError):
        build_rect_mesh(2, 2, diagonal="zigzag")


def test_dof_map():
    m = build_rect_mesh(3, 3)
    dm = interior_dof_map(m)
    assert dm.n_dofs == 4
    assert np.all(dm.dof_of_node[m.boundary_nodes] == -1)
    assert np.array_equal(dm.interior[dm.dof_of_node[dm.interior]], dm.interior)


def test_mesh_round_trip(tmp_path):
    m = build_rect_mesh(3, 2, 1.5, 1.0, "union_jack")
    write_mesh(m, tmp_path / "m.txt")
    m2 = read_mesh(tmp_path / "m.txt")
    assert np.array_equal(m.nodes, m2.nodes)
    assert np.array_equal(m.elements, m2.elements)
    assert np.array_equal(m.boundary, m2.boundary)


def test_mesh_arrays_are_read_only():
    m = build_rect_mesh(2, 2)
    with pytest.raises(ValueError):
        m.nodes[0, 0] = 5.0
