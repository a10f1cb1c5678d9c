"""Polygonal mesh representation, geometric quantities and quadrature access.

A mesh stores vertices, counter-clockwise cell loops, the derived edge table
with adjacency, and per-entity geometry (centroids, areas, diameters, edge
lengths/midpoints/normals).  Meshes are immutable after construction and can
be serialized to a small JSON schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .quadrature import (
    QuadratureRule,
    polygon_area,
    polygon_centroid,
    polygon_rule,
    segment_lobatto_points,
    segment_rule,
)

__all__ = [
    "PolygonalMesh",
    "MeshQualityReport",
    "cell_quadrature",
    "edge_quadrature",
    "gauss_lobatto_nodes",
    "quality_report",
    "mesh_to_json",
    "mesh_from_json",
]

_AREA_RTOL = 1e-12


@dataclass(frozen=True)
class PolygonalMesh:
    """Immutable 2D polygonal mesh.

    vertices : (N_V, 2) float array
    cells    : list of CCW vertex-index loops
    edges    : (N_E, 2) vertex pairs, low index first
    edge_cells : (N_E, 2) adjacent cell indices, -1 for missing (boundary)
    boundary_edges : indices into `edges` with exactly one adjacent cell
    cell_boxes : optional axis-aligned box decomposition per cell, used for
        exact quadrature on union-of-squares cells
    """

    vertices: np.ndarray
    cells: list
    edges: np.ndarray
    edge_cells: np.ndarray
    boundary_edges: np.ndarray
    cell_centroids: np.ndarray
    cell_areas: np.ndarray
    cell_diameters: np.ndarray
    edge_lengths: np.ndarray
    edge_midpoints: np.ndarray
    edge_normals: np.ndarray
    boundary_levelset: str | None = None
    cell_boxes: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def cell_vertices(self, cell: int) -> np.ndarray:
        return self.vertices[self.cells[cell]]

    def cell_edges(self, cell: int) -> list:
        """Edge indices of a cell in loop order (edge i joins loop vertices i, i+1)."""
        loop = self.cells[cell]
        out = []
        for i in range(len(loop)):
            a, b = loop[i], loop[(i + 1) % len(loop)]
            out.append(self._edge_index[(min(a, b), max(a, b))])
        return out

    @property
    def _edge_index(self) -> dict:
        idx = self.__dict__.get("_edge_index_cache")
        if idx is None:
            idx = {(int(a), int(b)): i for i, (a, b) in enumerate(self.edges)}
            self.__dict__["_edge_index_cache"] = idx
        return idx

    def boundary_edge_cell(self, edge: int) -> int:
        a, b = self.edge_cells[edge]
        return int(a) if a >= 0 else int(b)


def build_mesh(
    vertices: np.ndarray,
    cells: list,
    boundary_levelset: str | None = None,
    cell_boxes: dict | None = None,
    expected_area: float | None = None,
) -> PolygonalMesh:
    """Assemble a PolygonalMesh from vertices and cell loops, validating the
    invariants (CCW simple loops, positive areas, edge adjacency counts,
    outward boundary normals and, when requested, the partition property)."""
    vertices = np.asarray(vertices, dtype=float)
    cells = [list(map(int, loop)) for loop in cells]

    centroids = np.zeros((len(cells), 2))
    areas = np.zeros(len(cells))
    diams = np.zeros(len(cells))
    for ci, loop in enumerate(cells):
        if len(loop) < 3:
            raise ValueError(f"cell {ci} has fewer than 3 vertices")
        if len(set(loop)) != len(loop):
            raise ValueError(f"cell {ci} repeats a vertex")
        pts = vertices[loop]
        a = polygon_area(pts)
        if a <= 0.0:
            raise ValueError(f"cell {ci} is not counter-clockwise or has zero area")
        areas[ci] = a
        centroids[ci] = polygon_centroid(pts)
        d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
        diams[ci] = np.sqrt(np.max(d2))

    edge_map: dict = {}
    for ci, loop in enumerate(cells):
        for i in range(len(loop)):
            a, b = loop[i], loop[(i + 1) % len(loop)]
            if a == b:
                raise ValueError(f"cell {ci} has a degenerate edge")
            key = (min(a, b), max(a, b))
            edge_map.setdefault(key, []).append(ci)

    edges = np.array(sorted(edge_map.keys()), dtype=int).reshape(-1, 2)
    edge_cells = np.full((len(edges), 2), -1, dtype=int)
    for ei, key in enumerate(map(tuple, edges)):
        adj = edge_map[key]
        if len(adj) > 2:
            raise ValueError(f"edge {key} is shared by more than two cells")
        edge_cells[ei, : len(adj)] = adj
    boundary = np.array([i for i in range(len(edges)) if edge_cells[i, 1] < 0], dtype=int)

    lengths = np.hypot(
        vertices[edges[:, 1], 0] - vertices[edges[:, 0], 0],
        vertices[edges[:, 1], 1] - vertices[edges[:, 0], 1],
    )
    if np.any(lengths <= 0.0):
        raise ValueError("mesh contains a zero-length edge")
    midpoints = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])

    # normals: outward from the first adjacent cell (for boundary edges this
    # is the unique cell, so the normal points out of the mesh); rotating the
    # CCW traversal direction by -90 degrees is outward by construction, and
    # a point-in-polygon probe guards against mis-oriented loops (the convex
    # shortcut nu . (mid - centroid) > 0 fails on staircase cells)
    normals = np.zeros((len(edges), 2))
    for ei in range(len(edges)):
        ci = edge_cells[ei, 0]
        loop = cells[ci]
        a, b = edges[ei]
        pos = loop.index(a)
        if loop[(pos + 1) % len(loop)] == b:
            d = vertices[b] - vertices[a]
        else:
            d = vertices[a] - vertices[b]
        n = np.array([d[1], -d[0]]) / np.hypot(*d)
        normals[ei] = n
        probe = midpoints[ei] + (1e-9 * diams[ci]) * n
        if _points_in_polygon(probe[None, :], vertices[loop])[0]:
            raise ValueError(f"edge {ei} normal does not point out of cell {ci}")

    mesh = PolygonalMesh(
        vertices=vertices,
        cells=cells,
        edges=edges,
        edge_cells=edge_cells,
        boundary_edges=boundary,
        cell_centroids=centroids,
        cell_areas=areas,
        cell_diameters=diams,
        edge_lengths=lengths,
        edge_midpoints=midpoints,
        edge_normals=normals,
        boundary_levelset=boundary_levelset,
        cell_boxes=dict(cell_boxes or {}),
    )
    if expected_area is not None:
        total = float(np.sum(areas))
        if abs(total - expected_area) > _AREA_RTOL * max(abs(expected_area), 1.0):
            raise ValueError(
                f"cells do not tile the domain: sum of areas {total!r} vs {expected_area!r}"
            )
    mesh.vertices.setflags(write=False)
    mesh.edges.setflags(write=False)
    return mesh


def cell_quadrature(mesh: PolygonalMesh, cell: int, exactness: int) -> QuadratureRule:
    """Quadrature rule on one cell, exact for polynomials up to `exactness`."""
    boxes = mesh.cell_boxes.get(cell)
    try:
        return polygon_rule(mesh.cell_vertices(cell), exactness, boxes=boxes)
    except ValueError as exc:
        raise ValueError(f"cell {cell}: {exc}") from exc


def edge_quadrature(mesh: PolygonalMesh, edge: int, exactness: int) -> QuadratureRule:
    a, b = mesh.edges[edge]
    return segment_rule(mesh.vertices[a], mesh.vertices[b], exactness)


def gauss_lobatto_nodes(mesh: PolygonalMesh, edge: int, k: int) -> np.ndarray:
    """The k+1 Gauss-Lobatto points of an edge (endpoints plus k-1 interior)."""
    a, b = mesh.edges[edge]
    return segment_lobatto_points(mesh.vertices[a], mesh.vertices[b], k)


@dataclass(frozen=True)
class MeshQualityReport:
    n_cells: int
    n_edges: int
    n_vertices: int
    h: float
    h_mean: float
    h_min: float
    gamma0_estimate: float
    max_edges_per_cell: int

    def as_dict(self) -> dict:
        return {
            "N_P": self.n_cells,
            "N_E": self.n_edges,
            "N_V": self.n_vertices,
            "h": self.h,
            "h_mean": self.h_mean,
            "h_min": self.h_min,
            "gamma0_estimate": self.gamma0_estimate,
            "max_edges_per_cell": self.max_edges_per_cell,
        }


def _inscribed_radius_estimate(pts: np.ndarray, samples: int = 12) -> float:
    """Largest distance from an interior sample point to the cell boundary.

    Samples the centroid plus a grid over the bounding box filtered to the
    polygon interior; a cheap lower estimate of the inradius, good enough
    for the mesh-regularity diagnostic.
    """
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    xs = np.linspace(lo[0], hi[0], samples + 2)[1:-1]
    ys = np.linspace(lo[1], hi[1], samples + 2)[1:-1]
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    cand = np.column_stack([gx.ravel(), gy.ravel()])
    cand = np.vstack([polygon_centroid(pts)[None, :], cand])

    a = pts
    b = np.roll(pts, -1, axis=0)
    dmin = np.full(len(cand), np.inf)
    for i in range(len(pts)):
        e = b[i] - a[i]
        w = cand - a[i]
        t = np.clip((w @ e) / (e @ e), 0.0, 1.0)
        proj = a[i] + t[:, None] * e[None, :]
        dmin = np.minimum(dmin, np.hypot(*(cand - proj).T))
    inside = _points_in_polygon(cand, pts)
    if not np.any(inside):
        return 0.0
    return float(np.max(dmin[inside]))


def _points_in_polygon(cand: np.ndarray, pts: np.ndarray) -> np.ndarray:
    x, y = cand[:, 0], cand[:, 1]
    inside = np.zeros(len(cand), dtype=bool)
    n = len(pts)
    j = n - 1
    for i in range(n):
        xi, yi = pts[i]
        xj, yj = pts[j]
        crosses = (yi > y) != (yj > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = xi + (y - yi) * (xj - xi) / (yj - yi)
        inside ^= crosses & (x < xint)
        j = i
    return inside


def quality_report(mesh: PolygonalMesh) -> MeshQualityReport:
    h_min = np.inf
    gamma0 = np.inf
    max_edges = 0
    for ci, loop in enumerate(mesh.cells):
        pts = mesh.vertices[loop]
        d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
        np.fill_diagonal(d2, np.inf)
        h_min = min(h_min, float(np.sqrt(np.min(d2))))
        rho = _inscribed_radius_estimate(pts)
        gamma0 = min(gamma0, rho / mesh.cell_diameters[ci])
        max_edges = max(max_edges, len(loop))
    return MeshQualityReport(
        n_cells=mesh.n_cells,
        n_edges=mesh.n_edges,
        n_vertices=mesh.n_vertices,
        h=float(np.max(mesh.cell_diameters)),
        h_mean=float(np.mean(mesh.cell_diameters)),
        h_min=h_min,
        gamma0_estimate=float(gamma0),
        max_edges_per_cell=max_edges,
    )


def mesh_to_json(mesh: PolygonalMesh, path=None) -> str:
    doc = {
        "vertices": [[float(x), float(y)] for x, y in mesh.vertices],
        "cells": [list(map(int, loop)) for loop in mesh.cells],
    }
    if mesh.boundary_levelset is not None:
        doc["boundary_levelset"] = mesh.boundary_levelset
    text = json.dumps(doc)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def mesh_from_json(source) -> PolygonalMesh:
    """Load a mesh from a JSON string or file path, validating all invariants."""
    if isinstance(source, str) and source.lstrip().startswith("{"):
        doc = json.loads(source)
    else:
        with open(source) as fh:
            doc = json.load(fh)
    return build_mesh(
        np.asarray(doc["vertices"], dtype=float),
        doc["cells"],
        boundary_levelset=doc.get("boundary_levelset"),
    )
