import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from memfem.errors import ConfigError
from memfem.mesh import build_dofmap, structured_unit_square, uniform_mesh1d


def test_uniform_mesh1d_nodes():
    mesh = uniform_mesh1d(1.0, 4)
    assert_array_equal(mesh.nodes, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert mesh.h == 0.25
    assert mesh.n_elements == 4


def test_uniform_mesh1d_validation():
    with pytest.raises(ValueError):
        uniform_mesh1d(1.0, 0)
    with pytest.raises(ValueError):
        uniform_mesh1d(-1.0, 4)


def test_mesh1d_beam_pair_dof_count():
    # n = 20 gives h = 0.05 and a 2*(n+1) = 42 dof nodal pair
    mesh = uniform_mesh1d(1.0, 20)
    assert_allclose(mesh.h, 0.05, rtol=1e-14)
    p1 = build_dofmap(mesh, "P1_continuous")
    assert 2 * p1.n_dofs == 42


def test_mesh1d_refinement_nesting():
    for n in (5, 8, 20):
        coarse = uniform_mesh1d(1.0, n)
        fine = uniform_mesh1d(1.0, 2 * n)
        assert_array_equal(fine.nodes[::2], coarse.nodes)


def test_mesh1d_exactly_uniform():
    mesh = uniform_mesh1d(3.0, 7)
    lengths = mesh.cell_lengths
    assert np.max(lengths) / np.min(lengths) < 1.0 + 1e-14


def test_trimesh_rejects_clockwise_triangles():
    import numpy
    from memfem.mesh import TriMesh
    vertices = numpy.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError, match="counterclockwise"):
        TriMesh(vertices, numpy.array([[0, 2, 1]]))


def test_unit_square_counts_m1():
    mesh = structured_unit_square(1)
    assert mesh.n_vertices == 4
    assert mesh.n_triangles == 2
    assert mesh.n_edges == 5


def test_unit_square_counts_m2_euler():
    mesh = structured_unit_square(2)
    assert mesh.n_vertices == 9
    assert mesh.n_triangles == 8
    assert mesh.n_edges == 16
    # Euler characteristic with the outer face counted
    assert mesh.n_vertices - mesh.n_edges + (mesh.n_triangles + 1) == 2


def test_unit_square_total_area():
    for m in (1, 2, 3, 8):
        mesh = structured_unit_square(m)
        assert_allclose(np.sum(mesh.areas), 1.0, rtol=0, atol=1e-14)
        assert np.all(mesh.areas > 0)


def test_unit_square_interior_edges_shared_twice():
    mesh = structured_unit_square(3)
    counts = np.zeros(mesh.n_edges, dtype=int)
    for k in range(mesh.n_triangles):
        counts[mesh.tri_edges[k]] += 1
    assert set(np.unique(counts)) <= {1, 2}
    assert_array_equal(counts == 1, mesh.boundary_edge)
    # boundary of the unit square has 2*4*m edges... each side has m
    # cell edges, so 4m boundary edges total
    assert mesh.boundary_edge.sum() == 4 * 3


def test_mesh_determinism():
    a = structured_unit_square(4)
    b = structured_unit_square(4)
    assert_array_equal(a.edges, b.edges)
    assert_array_equal(a.tri_edges, b.tri_edges)
    assert_array_equal(a.tri_edge_signs, b.tri_edge_signs)
    ma = uniform_mesh1d(1.0, 16)
    mb = uniform_mesh1d(1.0, 16)
    assert_array_equal(ma.nodes, mb.nodes)


def test_dofmap_counts():
    line = uniform_mesh1d(1.0, 20)
    assert build_dofmap(line, "P1_continuous").n_dofs == 21
    assert build_dofmap(line, "P0_discontinuous").n_dofs == 20
    square = structured_unit_square(2)
    assert build_dofmap(square, "RT0").n_dofs == 16
    assert build_dofmap(square, "P0_tri").n_dofs == 8


def test_dofmap_incompatible_space():
    with pytest.raises(ConfigError):
        build_dofmap(uniform_mesh1d(1.0, 4), "RT0")
    with pytest.raises(ConfigError):
        build_dofmap(structured_unit_square(2), "P1_continuous")


def test_mesh_dump_listing():
    text = structured_unit_square(1).dump()
    assert "vertices 4" in text and "triangles 2" in text and "edges 5" in text
