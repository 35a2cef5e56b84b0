import io

import numpy as np
import pytest

from femeig.mesh import (
    L_SHAPE,
    UNIT_SQUARE,
    build_mesh,
    edge_adjacency,
    refine_uniform,
    write_mesh_text,
)


def shoelace_area(mesh):
    # independent area oracle: sum of per-triangle shoelace areas
    v = mesh.vertices[mesh.triangles]
    return 0.5 * np.sum(
        (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
        - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0])
    )


def test_unit_square_level0():
    mesh = build_mesh(UNIT_SQUARE, 0)
    assert mesh.n_triangles == 2
    assert mesh.n_vertices == 4
    assert mesh.h == pytest.approx(np.sqrt(2.0), abs=1e-15)


def test_unit_square_level3_count_and_area():
    mesh = build_mesh(UNIT_SQUARE, 3)
    assert mesh.n_triangles == 2 * 4**3
    assert shoelace_area(mesh) == pytest.approx(1.0, abs=1e-12)


def test_lshape_level1_area():
    mesh = build_mesh(L_SHAPE, 1)
    assert shoelace_area(mesh) == pytest.approx(3.0, abs=1e-12)


def test_h_halves_per_level():
    for domain in (UNIT_SQUARE, L_SHAPE):
        h0 = build_mesh(domain, 0).h
        for level in range(1, 4):
            assert build_mesh(domain, level).h == pytest.approx(
                h0 * 0.5**level, abs=1e-14
            )


def test_refine_splits_four_ways():
    mesh = build_mesh(UNIT_SQUARE, 0)
    fine = refine_uniform(mesh)
    assert fine.n_triangles == 8
    assert fine.h == pytest.approx(mesh.h / 2, abs=1e-14)
    # children of parent t occupy 4t..4t+3 and tile the parent
    parent_area = mesh.tri_areas[1]
    assert fine.tri_areas[4:8].sum() == pytest.approx(parent_area, abs=1e-14)


def test_refine_preserves_lshape_area():
    fine = refine_uniform(build_mesh(L_SHAPE, 0))
    assert shoelace_area(fine) == pytest.approx(3.0, abs=1e-12)


def test_level_guard():
    with pytest.raises(ValueError):
        build_mesh(UNIT_SQUARE, 11)
    with pytest.raises(ValueError):
        build_mesh(UNIT_SQUARE, -1)


def test_euler_formula():
    for domain in (UNIT_SQUARE, L_SHAPE):
        for level in range(4):
            m = build_mesh(domain, level)
            assert m.n_vertices - m.n_edges + m.n_triangles == 1


def test_edge_adjacency_boundary_outward_normal():
    mesh = build_mesh(UNIT_SQUARE, 2)
    # boundary edges on x = 1 must carry the outward normal (1, 0)
    found = 0
    for e in range(mesh.n_edges):
        a, b = mesh.edge_vertices[e]
        if mesh.vertices[a, 0] == 1.0 and mesh.vertices[b, 0] == 1.0:
            adj = edge_adjacency(mesh, e)
            assert adj.k_minus is None
            assert np.allclose(adj.normal, [1.0, 0.0], atol=1e-14)
            found += 1
    assert found > 0


def test_edge_adjacency_interior():
    mesh = build_mesh(UNIT_SQUARE, 2)
    interior = np.flatnonzero(~mesh.edge_is_boundary)
    for e in interior[:10]:
        adj = edge_adjacency(mesh, int(e))
        assert adj.k_plus != adj.k_minus
        assert np.hypot(*adj.normal) == pytest.approx(1.0, abs=1e-14)
        # normal points from K- into K+
        d = mesh.centroids[adj.k_plus] - mesh.centroids[adj.k_minus]
        assert np.dot(adj.normal, d) > 0


def test_edge_adjacency_out_of_range():
    mesh = build_mesh(UNIT_SQUARE, 0)
    with pytest.raises(IndexError):
        edge_adjacency(mesh, mesh.n_edges)


def test_interior_edges_opposite_orientation():
    mesh = build_mesh(L_SHAPE, 2)
    directed = {}
    for tri in mesh.triangles:
        for i in range(3):
            key = (int(tri[i]), int(tri[(i + 1) % 3]))
            directed[key] = directed.get(key, 0) + 1
    for e in range(mesh.n_edges):
        a, b = (int(v) for v in mesh.edge_vertices[e])
        if mesh.edge_is_boundary[e]:
            assert directed.get((a, b), 0) + directed.get((b, a), 0) == 1
        else:
            assert directed.get((a, b), 0) == 1
            assert directed.get((b, a), 0) == 1


def test_mesh_dump_format():
    mesh = build_mesh(UNIT_SQUARE, 0)
    buf = io.StringIO()
    write_mesh_text(mesh, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "v 0 0"
    assert len([l for l in lines if l.startswith("v ")]) == 4
    assert len([l for l in lines if l.startswith("t ")]) == 2


def test_mesh_immutable():
    mesh = build_mesh(UNIT_SQUARE, 1)
    with pytest.raises(ValueError):
        mesh.vertices[0, 0] = 5.0
