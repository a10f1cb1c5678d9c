"""Taylor boundary correction for polygonal approximations of curved domains.

On each boundary edge the correction field is

    c(u)(x) = sum_{j=1..kstar} delta(x)^j / j! * d_sigma^j (Pi-nabla u)(x),

with delta the gap to the true boundary along the constant per-edge outward
direction sigma, evaluated pointwise at the edge quadrature nodes.  The
boundary datum is composed with the foot point, g~(x) = g(x + delta(x) sigma).
The corrected multiplier system gains c(u) in the multiplier row only (and is
therefore non-symmetric); eliminating the multiplier yields the corrected
penalty system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import directional_derivative_matrix
from .element import GlobalDofMap
from .levelset import CorrectionConfig, LevelSetDomain, choose_sigma, delta_many
from .linsys import LinearSystem
from .mesh import PolygonalMesh
from .weakbc import (
    MultiplierSpace,
    WeakBcConfig,
    assemble_bh,
    assemble_nitsche,
    edge_workspaces,
    recover_multiplier,
)

__all__ = [
    "EdgeCorrection",
    "correction_data",
    "correction_blocks",
    "assemble_bdt_bh",
    "assemble_bdt_nitsche",
    "recover_multiplier_curved",
]


@dataclass(frozen=True)
class EdgeCorrection:
    edge: int
    sigma: np.ndarray
    deltas: np.ndarray        # gap at each quadrature point
    foot_points: np.ndarray   # x + delta(x) sigma, on the true boundary
    values: np.ndarray | None  # (nq, n_cell_dofs) correction field, None if kstar = 0
    block: np.ndarray | None   # (k'+1, n_cell_dofs) multiplier-row coupling


def correction_data(mesh: PolygonalMesh, elements: list, mult: MultiplierSpace,
                    levelset: LevelSetDomain, cfg_bc: WeakBcConfig,
                    cfg_corr: CorrectionConfig, works: list | None = None) -> tuple:
    """Per-edge correction quantities on the shared edge quadrature.

    Returns (works, corrections); delta is found once per quadrature node and
    reused by every assembly consuming the same workspaces.
    """
    if cfg_corr.kstar > cfg_bc.k:
        raise ValueError("kstar must not exceed the space order k")
    dofmap = GlobalDofMap(mesh, cfg_bc.k)
    exact = cfg_corr.edge_exactness or cfg_bc.resolved_edge_exactness
    if works is None:
        works = edge_workspaces(mesh, elements, dofmap, mult, exact)
    out = []
    for w in works:
        sigma = choose_sigma(levelset, mesh, w.edge, cfg_corr)
        ds = delta_many(levelset, w.points, sigma, cfg=cfg_corr, scale=w.htilde,
                        context=f" (edge {w.edge})")
        foot = w.points + ds[:, None] * sigma[None, :]
        values = None
        block = None
        if cfg_corr.kstar >= 1:
            el = elements[w.cell]
            m1 = directional_derivative_matrix(el.basis, sigma, 1)
            evals = el.basis.eval(w.points)
            cur = el.pinabla
            values = np.zeros((len(w.points), el.n_dofs))
            for j in range(1, cfg_corr.kstar + 1):
                cur = m1 @ cur
                values += (ds**j / math.factorial(j))[:, None] * (evals @ cur)
            block = w.psi.T @ (w.weights[:, None] * values)
        out.append(EdgeCorrection(w.edge, sigma, ds, foot, values, block))
    return works, out


def correction_blocks(mesh: PolygonalMesh, elements: list, mult: MultiplierSpace,
                      levelset: LevelSetDomain, cfg_bc: WeakBcConfig,
                      cfg_corr: CorrectionConfig) -> list:
    """Multiplier-row coupling blocks of the correction operator (empty blocks
    for kstar = 0)."""
    _, corrs = correction_data(mesh, elements, mult, levelset, cfg_bc, cfg_corr)
    return [c.block for c in corrs]


def assemble_bdt_bh(mesh: PolygonalMesh, elements: list, mult: MultiplierSpace,
                    levelset: LevelSetDomain, cfg_bc: WeakBcConfig,
                    cfg_corr: CorrectionConfig, f, g) -> LinearSystem:
    """Corrected multiplier saddle system on an inscribed polygonal mesh."""
    works, corrs = correction_data(mesh, elements, mult, levelset, cfg_bc, cfg_corr)
    gvals = [np.asarray(g(c.foot_points), dtype=float) for c in corrs]
    blocks = [c.block for c in corrs]
    if all(b is None for b in blocks):
        blocks = None
    return assemble_bh(mesh, elements, mult, cfg_bc, f, g, works=works,
                       correction_blocks=blocks, g_values=gvals)


def assemble_bdt_nitsche(mesh: PolygonalMesh, elements: list,
                         levelset: LevelSetDomain, cfg_bc: WeakBcConfig,
                         cfg_corr: CorrectionConfig, f, g,
                         mult: MultiplierSpace | None = None) -> LinearSystem:
    """Corrected penalty system; equals the edge-local condensation of the
    corrected multiplier system for k' = k, gamma = 1/alpha."""
    if mult is None:
        mult = MultiplierSpace.create(mesh, cfg_bc.resolved_kprime)
    works, corrs = correction_data(mesh, elements, mult, levelset, cfg_bc, cfg_corr)
    gvals = [np.asarray(g(c.foot_points), dtype=float) for c in corrs]
    values = [c.values for c in corrs]
    if all(v is None for v in values):
        values = None
    return assemble_nitsche(mesh, elements, cfg_bc, f, g, works=works, mult=mult,
                            correction_values=values, g_values=gvals)


def recover_multiplier_curved(u_dofs: np.ndarray, mesh: PolygonalMesh, elements: list,
                              levelset: LevelSetDomain, cfg_bc: WeakBcConfig,
                              cfg_corr: CorrectionConfig, g,
                              mult: MultiplierSpace | None = None) -> np.ndarray:
    if mult is None:
        mult = MultiplierSpace.create(mesh, cfg_bc.resolved_kprime)
    works, corrs = correction_data(mesh, elements, mult, levelset, cfg_bc, cfg_corr)
    gvals = [np.asarray(g(c.foot_points), dtype=float) for c in corrs]
    values = [c.values for c in corrs]
    if all(v is None for v in values):
        values = None
    return recover_multiplier(u_dofs, mesh, elements, cfg_bc, g, mult=mult,
                              works=works, correction_values=values, g_values=gvals)
