"""Gauss quadrature on segments, triangles and general polygons.

Polygon rules are built by triangulating the polygon (centroid fan with an
ear-clipping fallback, or an axis-aligned box decomposition when the caller
already knows one) and placing a tensor Gauss rule on each triangle through
the Duffy transform.  All weights are positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "QuadratureRule",
    "gauss_legendre",
    "gauss_lobatto",
    "segment_rule",
    "segment_lobatto_points",
    "triangle_rule",
    "polygon_rule",
    "polygon_area",
    "polygon_centroid",
    "triangulate_polygon",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Points (n, 2) and weights (n,) for one mesh entity."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def measure(self) -> float:
        return float(np.sum(self.weights))

    def integrate(self, f) -> float:
        vals = np.asarray(f(self.points), dtype=float)
        return float(self.weights @ vals)


@lru_cache(maxsize=None)
def gauss_legendre(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [-1, 1], exact to degree 2*npts - 1."""
    if npts < 1:
        raise ValueError("need at least one Gauss point")
    x, w = np.polynomial.legendre.leggauss(npts)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def gauss_lobatto(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Lobatto nodes/weights on [-1, 1] including both endpoints.

    Exact to degree 2*npts - 3.  Interior nodes are the roots of the
    derivative of the Legendre polynomial of degree npts - 1.
    """
    if npts < 2:
        raise ValueError("Lobatto rules need at least two points")
    n = npts - 1
    if n == 1:
        nodes = np.array([-1.0, 1.0])
    else:
        interior = np.polynomial.legendre.Legendre.basis(n).deriv().roots()
        nodes = np.concatenate(([-1.0], np.sort(interior.real), [1.0]))
    pn = np.polynomial.legendre.Legendre.basis(n)(nodes)
    weights = 2.0 / (n * (n + 1) * pn**2)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _points_for_exactness(exactness: int) -> int:
    return max(1, (int(exactness) + 2) // 2)


def segment_rule(a, b, exactness: int) -> QuadratureRule:
    """Gauss-Legendre rule on the segment from a to b."""
    if exactness < 0:
        raise ValueError("exactness must be nonnegative")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x, w = gauss_legendre(_points_for_exactness(exactness))
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = mid[None, :] + x[:, None] * half[None, :]
    length = float(np.hypot(*(b - a)))
    return QuadratureRule(pts, w * (0.5 * length))


def segment_lobatto_points(a, b, k: int) -> np.ndarray:
    """The k+1 Gauss-Lobatto points on the segment a..b (endpoints first/last)."""
    if k < 1:
        raise ValueError("order k must be >= 1")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x, _ = gauss_lobatto(k + 1)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return mid[None, :] + x[:, None] * half[None, :]


def triangle_rule(v0, v1, v2, exactness: int) -> QuadratureRule:
    """Positive-weight tensor Gauss rule on a triangle, exact to `exactness`.

    Uses the Duffy map (u, v) -> v0 + u*(v1-v0) + v*(1-u)*(v2-v0); the extra
    Jacobian factor (1-u) raises the u-degree by one.
    """
    d = max(0, int(exactness))
    nu = _points_for_exactness(d + 1)
    nv = _points_for_exactness(d)
    xu, wu = gauss_legendre(nu)
    xv, wv = gauss_legendre(nv)
    u = 0.5 * (xu + 1.0)
    v = 0.5 * (xv + 1.0)
    wu = 0.5 * wu
    wv = 0.5 * wv
    v0 = np.asarray(v0, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = np.outer(wu, wv) * (1.0 - uu)
    pts = (
        v0[None, None, :]
        + uu[..., None] * (v1 - v0)[None, None, :]
        + (vv * (1.0 - uu))[..., None] * (v2 - v0)[None, None, :]
    )
    area2 = abs(_cross(v1 - v0, v2 - v0))
    return QuadratureRule(pts.reshape(-1, 2), (ww * area2).ravel())


def _cross(p, q) -> float:
    return float(p[0] * q[1] - p[1] * q[0])


def polygon_area(verts: np.ndarray) -> float:
    """Signed shoelace area (positive for counter-clockwise loops)."""
    v = np.asarray(verts, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(verts: np.ndarray) -> np.ndarray:
    v = np.asarray(verts, dtype=float)
    x, y = v[:, 0], v[:, 1]
    cr = x * np.roll(y, -1) - np.roll(x, -1) * y
    a = 0.5 * np.sum(cr)
    if abs(a) < 1e-300:
        return np.mean(v, axis=0)
    cx = np.sum((x + np.roll(x, -1)) * cr) / (6.0 * a)
    cy = np.sum((y + np.roll(y, -1)) * cr) / (6.0 * a)
    return np.array([cx, cy])


def triangulate_polygon(verts: np.ndarray) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Triangulate a simple CCW polygon.

    Tries the centroid fan first; falls back to ear clipping for cells that
    are not star shaped with respect to their centroid (staircase unions,
    loaded meshes).  Raises ValueError for non-simple input.
    """
    v = np.asarray(verts, dtype=float)
    if len(v) < 3:
        raise ValueError("polygon needs at least 3 vertices")
    area = polygon_area(v)
    if area <= 0.0:
        raise ValueError("polygon must be counter-clockwise with positive area")

    c = polygon_centroid(v)
    tris = []
    fan_ok = True
    fan_area = 0.0
    for i in range(len(v)):
        a, b = v[i], v[(i + 1) % len(v)]
        t2 = _cross(a - c, b - c)
        if t2 < -1e-13 * area:
            fan_ok = False
            break
        fan_area += 0.5 * t2
        if t2 > 0.0:
            tris.append((c, a, b))
    if fan_ok and abs(fan_area - area) <= 1e-12 * abs(area):
        return tris
    return _ear_clip(v, area)


def _ear_clip(v: np.ndarray, area: float) -> list:
    idx = list(range(len(v)))
    tris = []
    scale = max(1.0, float(np.max(np.abs(v))))
    eps = 1e-13 * scale * scale
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 4 * len(v) * len(v):
            raise ValueError("ear clipping failed; polygon may be non-simple")
        clipped = False
        n = len(idx)
        # prefer strictly convex ears, then flat (collinear) vertices
        for want_flat in (False, True):
            for j in range(n):
                i0, i1, i2 = idx[j - 1], idx[j], idx[(j + 1) % n]
                a, b, c = v[i0], v[i1], v[i2]
                cr = _cross(b - a, c - a)
                if want_flat:
                    # drop a vertex lying on the segment a-c (angle pi)
                    if abs(cr) <= eps and np.dot(b - a, c - b) > 0.0:
                        idx.pop(j)
                        clipped = True
                        break
                    continue
                if cr <= eps:
                    continue
                if any(
                    _point_in_tri(v[m], a, b, c, eps)
                    for m in idx
                    if m not in (i0, i1, i2)
                ):
                    continue
                tris.append((a, b, c))
                idx.pop(j)
                clipped = True
                break
            if clipped:
                break
        if not clipped:
            raise ValueError("ear clipping failed; polygon may be non-simple")
    a, b, c = v[idx[0]], v[idx[1]], v[idx[2]]
    if _cross(b - a, c - a) > eps:
        tris.append((a, b, c))
    got = sum(0.5 * abs(_cross(t[1] - t[0], t[2] - t[0])) for t in tris)
    if abs(got - area) > 1e-10 * max(abs(area), 1.0):
        raise ValueError("triangulation area mismatch; polygon may be non-simple")
    return tris


def polygon_rule(verts: np.ndarray, exactness: int, boxes: np.ndarray | None = None) -> QuadratureRule:
    """Quadrature on a simple polygon, exact for polynomials of the given degree.

    `boxes` is an optional (m, 4) array of axis-aligned rectangles
    (x0, y0, x1, y1) whose union is the polygon; when given, a tensor Gauss
    rule is placed on each rectangle instead of triangulating.
    """
    if exactness < 0:
        raise ValueError("exactness must be nonnegative")
    if boxes is not None and len(boxes) > 0:
        return _boxes_rule(np.asarray(boxes, dtype=float), exactness)
    pts = []
    wts = []
    for tri in triangulate_polygon(verts):
        r = triangle_rule(*tri, exactness)
        pts.append(r.points)
        wts.append(r.weights)
    return QuadratureRule(np.concatenate(pts), np.concatenate(wts))


def _boxes_rule(boxes: np.ndarray, exactness: int) -> QuadratureRule:
    x, w = gauss_legendre(_points_for_exactness(exactness))
    pts = []
    wts = []
    for x0, y0, x1, y1 in boxes:
        gx = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * x
        gy = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * x
        wx = 0.5 * (x1 - x0) * w
        wy = 0.5 * (y1 - y0) * w
        xx, yy = np.meshgrid(gx, gy, indexing="ij")
        pts.append(np.column_stack([xx.ravel(), yy.ravel()]))
        wts.append(np.outer(wx, wy).ravel())
    return QuadratureRule(np.concatenate(pts), np.concatenate(wts))


def _point_in_tri(p, a, b, c, eps) -> bool:
    d1 = _cross(b - a, p - a)
    d2 = _cross(c - b, p - b)
    d3 = _cross(a - c, p - c)
    return d1 >= -eps and d2 >= -eps and d3 >= -eps
