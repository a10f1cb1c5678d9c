"""Weak imposition of Dirichlet data on polygonal domains.

Two equivalent formulations are assembled: the stabilized Lagrange-multiplier
saddle system (symmetric indefinite; multiplier = discontinuous edge
polynomials of degree k' in {k, k-1}, residual penalty weighted by the
adjacent-cell diameter), and the Nitsche system obtained from it by edge-local
static condensation with gamma = 1/alpha when k' = k.

Every edge integral of one assembly uses a single shared quadrature rule, so
the condensation identity holds at roundoff level.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import EdgePolyBasis
from .element import GlobalDofMap, lagrange_eval_matrix, load_vector
from .linsys import LinearSystem, SaddlePartition, TripletBuilder
from .mesh import PolygonalMesh
from .quadrature import gauss_lobatto, segment_rule

__all__ = [
    "WeakBcConfig",
    "MultiplierSpace",
    "BoundaryNorms",
    "assemble_bh",
    "assemble_nitsche",
    "recover_multiplier",
    "boundary_norms",
    "edge_workspaces",
]

METHODS = ("barbosa_hughes", "nitsche")


@dataclass(frozen=True)
class WeakBcConfig:
    """Parameters of the weak boundary-condition formulations.

    alpha is the multiplier-penalty parameter (small), gamma the Nitsche
    penalty (large); the two formulations coincide for gamma = 1/alpha and
    k' = k.  The edge scale htilde is always the diameter of the adjacent
    cell.
    """

    method: str = "nitsche"
    k: int = 1
    kprime: int | None = None
    alpha: float = 0.001
    gamma: float = 1000.0
    edge_exactness: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.k < 1:
            raise ValueError("order k must be >= 1")
        kp = self.resolved_kprime
        if kp not in (self.k, self.k - 1):
            raise ValueError("kprime must be k or k-1")
        if self.method == "nitsche" and kp != self.k:
            raise ValueError("the Nitsche formulation requires kprime = k")
        if self.alpha <= 0 or self.gamma <= 0:
            raise ValueError("alpha and gamma must be positive")
        if self.method == "barbosa_hughes" and self.alpha >= 0.25:
            warnings.warn(
                f"alpha = {self.alpha} is large; the multiplier penalty is only "
                "stable for small alpha", stacklevel=2,
            )
        if self.method == "nitsche" and self.gamma <= 4.0:
            warnings.warn(
                f"gamma = {self.gamma} is small; the penalty formulation is only "
                "stable for large gamma", stacklevel=2,
            )

    @property
    def resolved_kprime(self) -> int:
        return self.k if self.kprime is None else self.kprime

    @property
    def resolved_edge_exactness(self) -> int:
        return self.edge_exactness if self.edge_exactness is not None else 2 * self.k + 2


@dataclass(frozen=True)
class MultiplierSpace:
    """Discontinuous edge polynomials of degree k' on the boundary edges."""

    mesh: PolygonalMesh
    kprime: int
    bases: list
    edge_position: dict  # boundary edge index -> position

    @classmethod
    def create(cls, mesh: PolygonalMesh, kprime: int) -> "MultiplierSpace":
        bases = []
        pos = {}
        for j, e in enumerate(mesh.boundary_edges):
            a, b = mesh.edges[e]
            bases.append(EdgePolyBasis.for_edge(mesh.vertices[a], mesh.vertices[b], kprime))
            pos[int(e)] = j
        return cls(mesh, kprime, bases, pos)

    @property
    def dim(self) -> int:
        return len(self.bases) * (self.kprime + 1)

    def offset(self, edge: int) -> int:
        return self.edge_position[int(edge)] * (self.kprime + 1)

    def edge_coeffs(self, coeffs: np.ndarray, edge: int) -> np.ndarray:
        o = self.offset(edge)
        return coeffs[o:o + self.kprime + 1]


@dataclass
class EdgeWork:
    """Precomputed quantities of one boundary edge shared by all assemblies."""

    edge: int
    cell: int
    htilde: float
    points: np.ndarray
    weights: np.ndarray
    cell_dofs: np.ndarray      # global DOFs of the adjacent cell
    edge_dofs_local: list      # local indices of the k+1 edge point values
    trace: np.ndarray          # (nq, k+1) values of v restricted to the edge
    normal_deriv: np.ndarray   # (nq, n_cell_dofs) of d_nu Pi-nabla
    psi: np.ndarray            # (nq, k'+1) multiplier basis values
    mass: np.ndarray           # multiplier mass matrix
    basis: EdgePolyBasis


def edge_workspaces(mesh: PolygonalMesh, elements: list, dofmap: GlobalDofMap,
                    mult: MultiplierSpace, exactness: int) -> list:
    """Per-boundary-edge quadrature data shared by the assemblies."""
    k = dofmap.k
    glx, _ = gauss_lobatto(k + 1)
    works = []
    for e in mesh.boundary_edges:
        cell = mesh.boundary_edge_cell(e)
        el = elements[cell]
        local = mesh.cell_edges(cell).index(int(e))
        a, b = mesh.edges[e]
        rule = segment_rule(mesh.vertices[a], mesh.vertices[b], exactness)

        loop = mesh.cells[cell]
        va = mesh.vertices[loop[local]]
        vb = mesh.vertices[loop[(local + 1) % len(loop)]]
        mid = 0.5 * (va + vb)
        length = el.edge_lengths[local]
        t = 2.0 * ((rule.points - mid) @ (vb - va)) / length**2
        trace = lagrange_eval_matrix(glx, t)

        gx, gy = el.basis.eval_gradient(rule.points)
        nrm = el.edge_normals[local]
        normal_deriv = (nrm[0] * gx + nrm[1] * gy) @ el.pinabla

        ebasis = mult.bases[mult.edge_position[int(e)]]
        psi = ebasis.eval(rule.points)
        mass = psi.T @ (rule.weights[:, None] * psi)
        works.append(EdgeWork(
            edge=int(e),
            cell=cell,
            htilde=float(mesh.cell_diameters[cell]),
            points=rule.points,
            weights=rule.weights,
            cell_dofs=dofmap.cell_dofs(cell),
            edge_dofs_local=el.layout.edge_point_dofs(local),
            trace=trace,
            normal_deriv=normal_deriv,
            psi=psi,
            mass=0.5 * (mass + mass.T),
            basis=ebasis,
        ))
    return works


def _check_elements(elements: list, cfg: WeakBcConfig):
    for el in elements:
        if el.k != cfg.k:
            raise ValueError(
                f"element of cell {el.cell} has order {el.k}, config expects {cfg.k}"
            )


def _scatter_volume(builder: TripletBuilder, rhs: np.ndarray, mesh, elements, dofmap, f):
    for el in elements:
        gd = dofmap.cell_dofs(el.cell)
        builder.add_block(gd, gd, el.stiffness)
        rhs[gd] += load_vector(el, f)


def assemble_bh(mesh: PolygonalMesh, elements: list, mult: MultiplierSpace,
                cfg: WeakBcConfig, f, g, works: list | None = None,
                correction_blocks: list | None = None,
                g_values: list | None = None) -> LinearSystem:
    """Assemble the stabilized-multiplier saddle system.

    Unknowns are (u, lambda); the multiplier couples through the boundary
    mass and the residual penalty -alpha * htilde * (lambda + dn u, mu + dn v).
    `correction_blocks` (one (k'+1, n_cell_dofs) matrix per boundary edge, or
    None entries) are added to the multiplier-row coupling only, and
    `g_values` overrides the pointwise boundary data (used for the corrected
    problem where g is composed with the boundary foot point).
    """
    _check_elements(elements, cfg)
    dofmap = GlobalDofMap(mesh, cfg.k)
    if works is None:
        works = edge_workspaces(mesh, elements, dofmap, mult, cfg.resolved_edge_exactness)
    nu = dofmap.n_dofs
    n = nu + mult.dim
    alpha = cfg.alpha
    builder = TripletBuilder(n)
    rhs = np.zeros(n)
    _scatter_volume(builder, rhs, mesh, elements, dofmap, f)

    symmetric = correction_blocks is None
    for i, w in enumerate(works):
        lam = nu + mult.offset(w.edge) + np.arange(w.psi.shape[1])
        ah = alpha * w.htilde
        wq = w.weights
        edofs = w.cell_dofs[w.edge_dofs_local]

        T = w.psi.T @ (wq[:, None] * w.trace)              # (m, k+1)
        N = w.psi.T @ (wq[:, None] * w.normal_deriv)       # (m, n_cell)
        pen = w.normal_deriv.T @ (wq[:, None] * w.normal_deriv)
        pen = 0.5 * (pen + pen.T)

        builder.add_block(w.cell_dofs, w.cell_dofs, -ah * pen)
        coupling_cols = T  # multiplier row: the same block enters transposed
        builder.add_block(lam, edofs, coupling_cols)
        builder.add_block(edofs, lam, coupling_cols.T)
        builder.add_block(lam, w.cell_dofs, -ah * N)
        builder.add_block(w.cell_dofs, lam, -ah * N.T)
        builder.add_block(lam, lam, -ah * w.mass)
        if correction_blocks is not None and correction_blocks[i] is not None:
            builder.add_block(lam, w.cell_dofs, correction_blocks[i])

        gv = g_values[i] if g_values is not None else np.asarray(g(w.points), dtype=float)
        rhs[lam] += w.psi.T @ (wq * gv)

    blocks = [(mult.offset(w.edge), w.psi.shape[1]) for w in works]
    partition = SaddlePartition(n_primal=nu, blocks=blocks,
                                edge_ids=[w.edge for w in works])
    return LinearSystem(matrix=builder.compress(), rhs=rhs, symmetric=symmetric,
                        partition=partition)


def assemble_nitsche(mesh: PolygonalMesh, elements: list, cfg: WeakBcConfig, f, g,
                     works: list | None = None, mult: MultiplierSpace | None = None,
                     correction_values: list | None = None,
                     g_values: list | None = None) -> LinearSystem:
    """Assemble the penalty (Nitsche) system over the primal DOFs.

    The boundary data enters through its edgewise L2 projection onto the
    multiplier space, evaluated with the same quadrature as all other edge
    terms.  `correction_values` (per edge, (nq, n_cell_dofs) or None) add the
    Taylor boundary correction tested against dn v - gamma/htilde * v.
    """
    _check_elements(elements, cfg)
    dofmap = GlobalDofMap(mesh, cfg.k)
    if mult is None:
        mult = MultiplierSpace.create(mesh, cfg.resolved_kprime)
    if works is None:
        works = edge_workspaces(mesh, elements, dofmap, mult, cfg.resolved_edge_exactness)
    nu = dofmap.n_dofs
    gamma = cfg.gamma
    builder = TripletBuilder(nu)
    rhs = np.zeros(nu)
    _scatter_volume(builder, rhs, mesh, elements, dofmap, f)

    for i, w in enumerate(works):
        wq = w.weights
        edofs = w.cell_dofs[w.edge_dofs_local]
        gh_scale = gamma / w.htilde

        cross = w.trace.T @ (wq[:, None] * w.normal_deriv)  # (k+1, n_cell)
        muv = w.trace.T @ (wq[:, None] * w.trace)
        muv = 0.5 * (muv + muv.T)
        builder.add_block(edofs, w.cell_dofs, -cross)
        builder.add_block(w.cell_dofs, edofs, -cross.T)
        builder.add_block(edofs, edofs, gh_scale * muv)

        gv = g_values[i] if g_values is not None else np.asarray(g(w.points), dtype=float)
        gh = w.psi @ np.linalg.solve(w.mass, w.psi.T @ (wq * gv))
        rhs[edofs] += gh_scale * (w.trace.T @ (wq * gh))
        rhs[w.cell_dofs] -= w.normal_deriv.T @ (wq * gh)

        if correction_values is not None and correction_values[i] is not None:
            corr = correction_values[i]  # (nq, n_cell)
            dn_block = w.normal_deriv.T @ (wq[:, None] * corr)
            tr_block = w.trace.T @ (wq[:, None] * corr)
            builder.add_block(w.cell_dofs, w.cell_dofs, -dn_block)
            builder.add_block(edofs, w.cell_dofs, gh_scale * tr_block)

    symmetric = correction_values is None
    return LinearSystem(matrix=builder.compress(), rhs=rhs, symmetric=symmetric)


def recover_multiplier(u_dofs: np.ndarray, mesh: PolygonalMesh, elements: list,
                       cfg: WeakBcConfig, g, mult: MultiplierSpace | None = None,
                       works: list | None = None,
                       correction_values: list | None = None,
                       g_values: list | None = None) -> np.ndarray:
    """Edge-by-edge multiplier recovery from a penalty-system solution:
    lambda = gamma/htilde * proj(u - g) - dn u (plus the projected Taylor
    correction on curved domains).  No global solve."""
    if mult is None:
        mult = MultiplierSpace.create(mesh, cfg.resolved_kprime)
    dofmap = GlobalDofMap(mesh, cfg.k)
    if works is None:
        works = edge_workspaces(mesh, elements, dofmap, mult, cfg.resolved_edge_exactness)
    gamma = cfg.gamma
    out = np.zeros(mult.dim)
    for i, w in enumerate(works):
        wq = w.weights
        uloc = u_dofs[w.cell_dofs]
        uvals = w.trace @ uloc[w.edge_dofs_local]
        gv = g_values[i] if g_values is not None else np.asarray(g(w.points), dtype=float)
        resid = uvals - gv
        if correction_values is not None and correction_values[i] is not None:
            resid = resid + correction_values[i] @ uloc
        rhsv = (gamma / w.htilde) * (w.psi.T @ (wq * resid))
        coeffs = np.linalg.solve(w.mass, rhsv - w.psi.T @ (wq * (w.normal_deriv @ uloc)))
        # the normal-derivative term lies in the multiplier space already, so
        # projecting it is exact; assembled this way for one mass solve
        o = mult.offset(w.edge)
        out[o:o + len(coeffs)] = coeffs
    return out


@dataclass
class BoundaryNorms:
    """Mesh-dependent boundary norms weighted by the adjacent-cell diameter.

    minus_half: (sum_f htilde ||.||^2_f)^(1/2)      (multiplier norm)
    half:       (sum_f htilde^-1 ||.||^2_f)^(1/2)   (trace norm)
    one(u):     (a_h-energy + ||proj u||^2_half)^(1/2) for VEM DOF vectors
    """

    mesh: PolygonalMesh
    kprime: int
    exactness: int
    _rules: list = field(default=None, repr=False)

    def __post_init__(self):
        if self._rules is None:
            self._rules = []
            for e in self.mesh.boundary_edges:
                a, b = self.mesh.edges[e]
                cell = self.mesh.boundary_edge_cell(e)
                self._rules.append((
                    int(e),
                    float(self.mesh.cell_diameters[cell]),
                    segment_rule(self.mesh.vertices[a], self.mesh.vertices[b], self.exactness),
                ))

    def _accumulate(self, fn, weight_fn) -> float:
        total = 0.0
        for e, htil, rule in self._rules:
            vals = np.asarray(fn(rule.points, e), dtype=float)
            total += weight_fn(htil) * float(rule.weights @ vals**2)
        return float(np.sqrt(total))

    def minus_half(self, fn) -> float:
        """fn(points, edge) -> values on the boundary."""
        return self._accumulate(fn, lambda h: h)

    def half(self, fn) -> float:
        return self._accumulate(fn, lambda h: 1.0 / h)

    def minus_half_mult(self, mult: MultiplierSpace, coeffs: np.ndarray, fn=None) -> float:
        """Norm of a discrete multiplier, optionally shifted by -fn."""

        def ev(pts, e):
            vals = mult.bases[mult.edge_position[e]].eval(pts) @ mult.edge_coeffs(coeffs, e)
            if fn is not None:
                vals = vals - np.asarray(fn(pts, e), dtype=float)
            return vals

        return self._accumulate(ev, lambda h: h)

    def one(self, elements: list, dofmap: GlobalDofMap, u_dofs: np.ndarray,
            mult: MultiplierSpace | None = None) -> float:
        energy = 0.0
        for el in elements:
            loc = u_dofs[dofmap.cell_dofs(el.cell)]
            energy += float(loc @ el.stiffness @ loc)
        if mult is None:
            mult = MultiplierSpace.create(self.mesh, self.kprime)
        glx, _ = gauss_lobatto(dofmap.k + 1)
        half_sq = 0.0
        for e, htil, rule in self._rules:
            cell = self.mesh.boundary_edge_cell(e)
            el = elements[cell]
            local = self.mesh.cell_edges(cell).index(e)
            loop = self.mesh.cells[cell]
            va = self.mesh.vertices[loop[local]]
            vb = self.mesh.vertices[loop[(local + 1) % len(loop)]]
            mid = 0.5 * (va + vb)
            t = 2.0 * ((rule.points - mid) @ (vb - va)) / el.edge_lengths[local]**2
            tr = lagrange_eval_matrix(glx, t)
            uloc = u_dofs[dofmap.cell_dofs(cell)]
            uv = tr @ uloc[el.layout.edge_point_dofs(local)]
            basis = mult.bases[mult.edge_position[e]]
            psi = basis.eval(rule.points)
            m = psi.T @ (rule.weights[:, None] * psi)
            proj = psi @ np.linalg.solve(m, psi.T @ (rule.weights * uv))
            half_sq += float(rule.weights @ proj**2) / htil
        return float(np.sqrt(energy + half_sq))


def boundary_norms(mesh: PolygonalMesh, cfg: WeakBcConfig) -> BoundaryNorms:
    return BoundaryNorms(mesh, cfg.resolved_kprime, cfg.resolved_edge_exactness)
