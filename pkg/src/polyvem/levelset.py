"""Implicit curved domains and the boundary-gap machinery.

A domain is described by a scalar field F with F < 0 inside, F = 0 on the
boundary, and an analytic gradient.  For a point x on the polygonal boundary
and an outward direction sigma, delta(x) is the smallest nonnegative root of
F(x + t sigma) = 0, found by a sign scan, bisection and a Newton polish.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .mesh import PolygonalMesh
from .quadrature import segment_rule

__all__ = [
    "LevelSetDomain",
    "CorrectionConfig",
    "TauReport",
    "circle",
    "ellipse",
    "half_plane",
    "intersection",
    "quarter_disk",
    "named_levelset",
    "delta",
    "delta_many",
    "choose_sigma",
    "tau_report",
    "kstar_default",
]


@dataclass(frozen=True)
class LevelSetDomain:
    """Implicit domain {F < 0} with analytic gradient.

    `f` and `grad` accept (n, 2) arrays and return (n,) and (n, 2) arrays.
    `interior_point` anchors ray casting; `bounding_box` is (xmin, ymin,
    xmax, ymax).
    """

    name: str
    f: callable
    grad: callable
    interior_point: np.ndarray
    bounding_box: tuple
    is_convex: bool = True
    params: dict = field(default_factory=dict)

    def value(self, x) -> float:
        return float(self.f(np.asarray(x, dtype=float)[None, :])[0])

    def gradient(self, x) -> np.ndarray:
        return np.asarray(self.grad(np.asarray(x, dtype=float)[None, :])[0], dtype=float)


def circle(center=(0.0, 0.0), radius: float = 1.0) -> LevelSetDomain:
    c = np.asarray(center, dtype=float)
    r2 = float(radius) ** 2

    def f(p):
        d = p - c
        return d[:, 0] ** 2 + d[:, 1] ** 2 - r2

    def grad(p):
        return 2.0 * (p - c)

    box = (c[0] - radius, c[1] - radius, c[0] + radius, c[1] + radius)
    return LevelSetDomain("circle", f, grad, c.copy(), box, True,
                          {"center": tuple(c), "radius": float(radius)})


def ellipse(a: float, b: float, center=(0.0, 0.0)) -> LevelSetDomain:
    c = np.asarray(center, dtype=float)
    a = float(a)
    b = float(b)

    def f(p):
        d = p - c
        return (d[:, 0] / a) ** 2 + (d[:, 1] / b) ** 2 - 1.0

    def grad(p):
        d = p - c
        return np.column_stack([2.0 * d[:, 0] / a**2, 2.0 * d[:, 1] / b**2])

    box = (c[0] - a, c[1] - b, c[0] + a, c[1] + b)
    return LevelSetDomain("ellipse", f, grad, c.copy(), box, True,
                          {"a": a, "b": b, "center": tuple(c)})


def half_plane(point, outward_normal, name: str = "half_plane") -> LevelSetDomain:
    p0 = np.asarray(point, dtype=float)
    n = np.asarray(outward_normal, dtype=float)
    n = n / np.hypot(*n)

    def f(p):
        return (p - p0) @ n

    def grad(p):
        return np.broadcast_to(n, (len(p), 2)).copy()

    big = 1e30
    box = [-big, -big, big, big]
    # axis-aligned half planes bound one side of the box exactly
    if abs(n[1]) < 1e-15:
        box[0 if n[0] < 0 else 2] = p0[0]
    elif abs(n[0]) < 1e-15:
        box[1 if n[1] < 0 else 3] = p0[1]
    return LevelSetDomain(name, f, grad, p0 - n, tuple(box), True)


def intersection(domains, name: str, interior_point) -> LevelSetDomain:
    """Intersection of convex domains: F = max of the children, gradient of
    the active child (first in case of ties)."""
    doms = list(domains)

    def f(p):
        return np.max(np.column_stack([d.f(p) for d in doms]), axis=1)

    def grad(p):
        vals = np.column_stack([d.f(p) for d in doms])
        active = np.argmax(vals, axis=1)
        out = np.zeros((len(p), 2))
        for i, d in enumerate(doms):
            sel = active == i
            if np.any(sel):
                out[sel] = d.grad(p[sel])
        return out

    boxes = np.array([d.bounding_box for d in doms])
    box = (
        float(np.max(boxes[:, 0])),
        float(np.max(boxes[:, 1])),
        float(np.min(boxes[:, 2])),
        float(np.min(boxes[:, 3])),
    )
    convex = all(d.is_convex for d in doms)
    return LevelSetDomain(name, f, grad, np.asarray(interior_point, dtype=float), box, convex)


def quarter_disk(radius: float = 1.0) -> LevelSetDomain:
    """Quarter disk {x >= 0, y >= 0, x^2 + y^2 <= r^2}; the straight sides are
    part of the zero set, so lattice-aligned mesh edges on the axes get
    delta = 0."""
    r = float(radius)
    dom = intersection(
        [circle(radius=r), half_plane((0, 0), (-1, 0)), half_plane((0, 0), (0, -1))],
        "quarter_disk",
        interior_point=(0.35 * r, 0.35 * r),
    )
    dom.params.update({"radius": r})
    return dom


_NAMED = {
    "circle": circle,
    "disk": circle,
    "ellipse": ellipse,
    "quarter_disk": quarter_disk,
    "quarter-disk": quarter_disk,
}


def named_levelset(name: str, **params) -> LevelSetDomain:
    try:
        factory = _NAMED[name]
    except KeyError:
        raise ValueError(f"unknown level set {name!r}; known: {sorted(_NAMED)}") from None
    return factory(**params)


@dataclass(frozen=True)
class CorrectionConfig:
    """Settings for the curved-boundary Taylor correction.

    kstar           order of the Taylor expansion, 0 <= kstar <= k
    sigma_strategy  'edge_normal' or 'distance_gradient'
    delta_max_factor  root bracket as a multiple of the adjacent-cell scale
    root_tol        residual |F| below which a point counts as on the boundary
    tau_threshold   tau_report warns above this value
    edge_exactness  quadrature degree for edge integrals involving delta
                    (None: the assembly default, 2k + 2)
    """

    kstar: int = 1
    sigma_strategy: str = "distance_gradient"
    delta_max_factor: float = 2.0
    root_tol: float = 1e-12
    tau_threshold: float = 0.5
    edge_exactness: int | None = None

    def __post_init__(self):
        if self.kstar < 0:
            raise ValueError("kstar must be nonnegative")
        if self.sigma_strategy not in ("edge_normal", "distance_gradient"):
            raise ValueError(f"unknown sigma strategy {self.sigma_strategy!r}")


def kstar_default(k: int, delta_regime: str) -> int:
    """Default Taylor order: ceil(k/2 - 3/4) when the boundary gap scales like
    h^2 (inscribed polygons with vertices on the boundary), k when it scales
    like h (union-of-squares meshes)."""
    if k < 1:
        raise ValueError("order k must be >= 1")
    if delta_regime == "h_squared":
        return max(0, math.ceil(k / 2.0 - 0.75))
    if delta_regime == "h_linear":
        return k
    raise ValueError(f"unknown delta regime {delta_regime!r}")


_SCAN_STEPS = 64


def delta(levelset: LevelSetDomain, x, sigma, cfg: CorrectionConfig | None = None,
          scale: float = 1.0, context: str = "") -> float:
    """Smallest t >= 0 with F(x + t sigma) = 0.

    x must lie inside the domain or on its boundary (F(x) <= 1e-10); the
    bracket is [0, delta_max_factor * scale].  Raises ValueError when no sign
    change is found (sigma not outward, or the polygonal domain pokes outside
    the curved one).
    """
    cfg = cfg or CorrectionConfig()
    x = np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    f0 = levelset.value(x)
    if f0 > 1e-10:
        raise ValueError(
            f"point {x.tolist()} lies outside the domain (F = {f0:.3e}){context}"
        )
    if abs(f0) <= cfg.root_tol:
        return 0.0
    tmax = cfg.delta_max_factor * scale
    ts = np.linspace(0.0, tmax, _SCAN_STEPS + 1)
    vals = levelset.f(x[None, :] + ts[:, None] * sigma[None, :])
    hit = np.nonzero(vals >= 0.0)[0]
    if len(hit) == 0:
        raise ValueError(
            f"no boundary crossing within {tmax:.3e} from {x.tolist()} along "
            f"{sigma.tolist()}{context}"
        )
    i = int(hit[0])
    lo, hi = ts[i - 1], ts[i]
    # bisection to an interval of width 1e-10
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if levelset.value(x + mid * sigma) >= 0.0:
            hi = mid
        else:
            lo = mid
    t = 0.5 * (lo + hi)
    # Newton polish on the residual
    for _ in range(30):
        ft = levelset.value(x + t * sigma)
        if abs(ft) <= 1e-14:
            break
        dft = float(levelset.gradient(x + t * sigma) @ sigma)
        if dft == 0.0:
            break
        step = ft / dft
        tn = t - step
        if not (lo - 1e-10 <= tn <= hi + 1e-10):
            break
        t = tn
    if abs(levelset.value(x + t * sigma)) > cfg.root_tol:
        raise ValueError(
            f"rootfinder stalled at residual {levelset.value(x + t * sigma):.3e} "
            f"from {x.tolist()}{context}"
        )
    return float(max(t, 0.0))


def delta_many(levelset, points: np.ndarray, sigma, cfg=None, scale: float = 1.0,
               context: str = "") -> np.ndarray:
    return np.array([
        delta(levelset, p, sigma, cfg=cfg, scale=scale, context=context) for p in points
    ])


def choose_sigma(levelset: LevelSetDomain, mesh: PolygonalMesh, edge: int,
                 cfg: CorrectionConfig) -> np.ndarray:
    """Constant outward direction for one boundary edge."""
    if cfg.sigma_strategy == "edge_normal":
        return mesh.edge_normals[edge].copy()
    g = levelset.gradient(mesh.edge_midpoints[edge])
    norm = float(np.hypot(*g))
    if norm < 1e-10:
        raise ValueError(f"level-set gradient vanishes at midpoint of edge {edge}")
    return g / norm


@dataclass(frozen=True)
class TauReport:
    """Per-edge and global maxima of delta(x) / h_tilde_f over quadrature points."""

    edge_indices: np.ndarray
    edge_tau: np.ndarray
    tau_hat: float
    worst_edge: int
    threshold: float

    @property
    def exceeded(self) -> bool:
        return self.tau_hat > self.threshold


def tau_report(levelset: LevelSetDomain, mesh: PolygonalMesh,
               cfg: CorrectionConfig, exactness: int | None = None) -> TauReport:
    exact = exactness if exactness is not None else (cfg.edge_exactness or 7)
    idx = mesh.boundary_edges
    taus = np.zeros(len(idx))
    for j, e in enumerate(idx):
        cell = mesh.boundary_edge_cell(e)
        htil = mesh.cell_diameters[cell]
        sigma = choose_sigma(levelset, mesh, e, cfg)
        a, b = mesh.edges[e]
        rule = segment_rule(mesh.vertices[a], mesh.vertices[b], exact)
        ds = delta_many(levelset, rule.points, sigma, cfg=cfg, scale=htil,
                        context=f" (edge {e})")
        taus[j] = float(np.max(ds)) / htil
    worst = int(np.argmax(taus)) if len(taus) else 0
    tau_hat = float(taus[worst]) if len(taus) else 0.0
    rep = TauReport(idx.copy(), taus, tau_hat, int(idx[worst]) if len(idx) else -1,
                    cfg.tau_threshold)
    if rep.exceeded:
        warnings.warn(
            f"boundary-gap ratio tau_hat = {tau_hat:.3f} exceeds {cfg.tau_threshold} "
            f"(worst edge {rep.worst_edge}); the corrected problem may be unstable",
            stacklevel=2,
        )
    return rep
