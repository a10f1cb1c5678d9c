import json

import numpy as np
import pytest

from polyvem import (
    build_structured_mesh,
    cell_quadrature,
    edge_quadrature,
    gauss_lobatto_nodes,
    mesh_from_json,
    mesh_to_json,
    quality_report,
)
from polyvem.mesh import build_mesh


def boundary_loops(mesh):
    """Chain boundary edges into closed vertex loops."""
    succ = {}
    for e in mesh.boundary_edges:
        a, b = mesh.edges[e]
        cell = mesh.boundary_edge_cell(e)
        loop = mesh.cells[cell]
        pos = loop.index(a)
        if loop[(pos + 1) % len(loop)] == b:
            succ[a] = b
        else:
            succ[b] = a
    loops = []
    while succ:
        start = next(iter(succ))
        cur = start
        loop = [start]
        while True:
            cur = succ.pop(cur)
            if cur == start:
                break
            loop.append(cur)
        loops.append(loop)
    return loops


def total_turning(mesh, loop):
    pts = mesh.vertices[loop]
    d = np.roll(pts, -1, axis=0) - pts
    ang = 0.0
    for i in range(len(d)):
        a = d[i - 1]
        b = d[i]
        ang += np.arctan2(a[0] * b[1] - a[1] * b[0], a @ b)
    return ang


def test_structured_single_cell():
    m = build_structured_mesh((0, 0, 1, 1), 1, 1)
    assert m.n_cells == 1
    assert abs(m.cell_areas[0] - 1.0) <= 1e-15
    assert abs(m.cell_diameters[0] - np.sqrt(2.0)) <= 1e-15
    assert len(m.boundary_edges) == 4


def test_structured_2x2_counts():
    m = build_structured_mesh((0, 0, 1, 1), 2, 2)
    assert m.n_cells == 4
    assert len(m.boundary_edges) == 8
    assert m.n_edges - len(m.boundary_edges) == 4  # interior edges


def test_structured_rectangle_areas():
    m = build_structured_mesh((0, 0, 2, 1), 2, 1)
    np.testing.assert_allclose(m.cell_areas, [1.0, 1.0])


def test_partition_property():
    m = build_structured_mesh((0, 0, 1, 1), 7, 3)
    assert abs(np.sum(m.cell_areas) - 1.0) <= 1e-12


def test_diameter_is_max_vertex_distance():
    m = build_structured_mesh((0, 0, 3, 1), 3, 1)
    assert np.allclose(m.cell_diameters, np.sqrt(2.0))


def test_boundary_normals_outward():
    m = build_structured_mesh((0, 0, 1, 1), 2, 2)
    for e in m.boundary_edges:
        c = m.boundary_edge_cell(e)
        assert np.dot(m.edge_normals[e], m.edge_midpoints[e] - m.cell_centroids[c]) > 0


def test_boundary_closure_turning():
    from polyvem import build_disk_approx_mesh, build_squares_approx_mesh, build_voronoi_mesh
    from polyvem.levelset import circle, quarter_disk

    meshes = [
        build_structured_mesh((0, 0, 1, 1), 3, 3),
        build_voronoi_mesh(None, 20, lloyd_iters=1, rng_seed=4),
        build_disk_approx_mesh(circle(), 16, 3),
        build_squares_approx_mesh(quarter_disk(), 6, 2),
    ]
    for m in meshes:
        loops = boundary_loops(m)
        assert len(loops) == 1
        assert abs(abs(total_turning(m, loops[0])) - 2 * np.pi) <= 1e-9


def test_quality_2x2():
    q = quality_report(build_structured_mesh((0, 0, 1, 1), 2, 2))
    assert abs(q.h - np.sqrt(2) / 2) <= 1e-14
    assert abs(q.h_mean - np.sqrt(2) / 2) <= 1e-14
    assert abs(q.h_min - 0.5) <= 1e-14
    assert 0 < q.h_min <= q.h_mean <= q.h


def test_quality_single_cell_gamma0():
    q = quality_report(build_structured_mesh((0, 0, 1, 1), 1, 1))
    # inradius 1/2 over diameter sqrt(2)
    assert abs(q.gamma0_estimate - 0.5 / np.sqrt(2.0)) <= 0.02
    assert 0 < q.gamma0_estimate <= 1.0


def test_euler_formula():
    for nx, ny in [(1, 1), (3, 2), (5, 5)]:
        q = quality_report(build_structured_mesh((0, 0, 1, 1), nx, ny))
        assert q.n_vertices - q.n_edges + q.n_cells == 1


def test_cell_quadrature_exactness():
    m = build_structured_mesh((0, 0, 1, 1), 2, 2)
    rule = cell_quadrature(m, 0, 4)
    got = rule.weights @ (rule.points[:, 0] ** 2 * rule.points[:, 1] ** 2)
    # cell [0, 1/2]^2: (int_0^{1/2} x^2 dx)^2 = (1/24)^2
    assert abs(got - (1.0 / 24.0) ** 2) <= 1e-13
    assert abs(rule.measure - 0.25) <= 1e-13


def test_edge_quadrature_and_lobatto():
    m = build_structured_mesh((0, 0, 1, 1), 1, 1)
    e = m.boundary_edges[0]
    rule = edge_quadrature(m, e, 3)
    assert abs(rule.measure - 1.0) <= 1e-14
    pts = gauss_lobatto_nodes(m, e, 2)
    assert pts.shape == (3, 2)


def test_json_roundtrip(tmp_path):
    m = build_structured_mesh((0, 0, 1, 1), 2, 3)
    path = tmp_path / "mesh.json"
    mesh_to_json(m, path)
    m2 = mesh_from_json(path)
    np.testing.assert_allclose(m.vertices, m2.vertices)
    assert m.cells == m2.cells
    # text form round-trips too
    m3 = mesh_from_json(mesh_to_json(m))
    assert m3.n_cells == m.n_cells


def test_voronoi_cell_quadrature_declared_exactness():
    from polyvem import build_voronoi_mesh
    m = build_voronoi_mesh(None, 9, rng_seed=2)
    for deg in (2, 5, 8):
        rule = cell_quadrature(m, 4, deg)
        ref = cell_quadrature(m, 4, deg + 4)
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                got = rule.weights @ (rule.points[:, 0] ** a * rule.points[:, 1] ** b)
                want = ref.weights @ (ref.points[:, 0] ** a * ref.points[:, 1] ** b)
                assert abs(got - want) <= 1e-12 * max(1.0, abs(want))


def test_json_keeps_levelset_name():
    from polyvem import build_disk_approx_mesh
    from polyvem.levelset import circle
    m = build_disk_approx_mesh(circle(), 8, 1)
    m2 = mesh_from_json(mesh_to_json(m))
    assert m2.boundary_levelset == "circle"


def test_json_rejects_clockwise_cell():
    doc = {"vertices": [[0, 0], [1, 0], [1, 1], [0, 1]], "cells": [[0, 3, 2, 1]]}
    with pytest.raises(ValueError):
        mesh_from_json(json.dumps(doc))


def test_json_rejects_overshared_edge():
    doc = {
        "vertices": [[0, 0], [1, 0], [1, 1], [0, 1], [0.5, -1]],
        "cells": [[0, 1, 2, 3], [0, 1, 2], [0, 4, 1]],
    }
    with pytest.raises(ValueError):
        mesh_from_json(json.dumps(doc))


def test_build_mesh_rejects_zero_area():
    with pytest.raises(ValueError):
        build_mesh(np.array([[0, 0], [1, 0], [2, 0]]), [[0, 1, 2]])
