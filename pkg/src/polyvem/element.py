"""Per-cell virtual element of order k for the Laplacian.

Degrees of freedom: vertex values in loop order, then the k-1 interior
Gauss-Lobatto point values of each edge in loop order, then area-normalized
moments against the scaled monomials of degree <= k-2 (orthonormalized in the
area-weighted product at k = 4, where the raw-monomial duals are too badly
scaled for the stabilization tolerances).

The element carries the energy projector onto P_k (computed from the weak
integration-by-parts identity, with the constant mode fixed by the boundary
mean), the consistency stiffness, and a stabilization acting on the
projector-free part of the degrees of freedom (plain or diagonally weighted
euclidean product).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .basis import CellPolyBasis, cell_basis_dim, monomial_exponents, orthonormalize
from .mesh import PolygonalMesh, cell_quadrature
from .quadrature import QuadratureRule, gauss_lobatto

__all__ = [
    "DofLayout",
    "LocalVemElement",
    "GlobalDofMap",
    "build_element",
    "build_all_elements",
    "interpolate",
    "load_vector",
    "project_gradient_l2",
    "lagrange_eval_matrix",
]

STABILIZATIONS = ("euclidean", "d_recipe")


@dataclass(frozen=True)
class DofLayout:
    """Deterministic per-cell DOF ordering."""

    k: int
    n_vertices: int
    point_coords: np.ndarray  # vertex coords then edge-interior GL nodes
    moment_exponents: list

    @property
    def n_point(self) -> int:
        return self.n_vertices * self.k

    @property
    def n_moment(self) -> int:
        return len(self.moment_exponents)

    @property
    def n_dofs(self) -> int:
        return self.n_point + self.n_moment

    def edge_point_dofs(self, local_edge: int) -> list:
        """Local indices of the k+1 GL values along local edge i, in traversal
        order (vertex i, interior nodes, vertex i+1)."""
        nv, k = self.n_vertices, self.k
        out = [local_edge]
        out += [nv + local_edge * (k - 1) + j for j in range(k - 1)]
        out.append((local_edge + 1) % nv)
        return out


@dataclass(frozen=True)
class LocalVemElement:
    cell: int
    k: int
    layout: DofLayout
    basis: CellPolyBasis
    quad: QuadratureRule
    area: float
    perimeter: float
    diameter: float
    edge_lengths: np.ndarray
    edge_normals: np.ndarray  # outward, per local edge
    pinabla: np.ndarray       # (dim P_k, n_dofs): DOFs -> P_k coefficients
    dof_of_poly: np.ndarray   # (n_dofs, dim P_k): DOFs of basis polynomials
    stiff_gram: np.ndarray    # grad-grad Gram of the basis
    consistency: np.ndarray   # K_c
    stability: np.ndarray     # S
    stiffness: np.ndarray     # K_c + S
    pi0_km2: np.ndarray | None  # (dim P_{k-2}, n_dofs) in raw monomials, k >= 2
    boundary_mean: np.ndarray   # row of |dK|^-1 int_dK phi_i
    moment_family: CellPolyBasis | None  # weight functions of the moment DOFs
    moment_to_raw: np.ndarray | None     # family moments -> raw monomial moments
    stab_label: str

    @property
    def n_dofs(self) -> int:
        return self.layout.n_dofs

    def raw_moments(self, dofs: np.ndarray) -> np.ndarray:
        """|K|^-1 int_K v m_alpha against the raw scaled monomials of degree
        <= k - 2, recovered from the moment DOFs."""
        if self.moment_to_raw is None:
            return np.zeros(0)
        return self.moment_to_raw @ dofs[self.layout.n_point:]


def lagrange_eval_matrix(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Matrix L with L[i, j] = ell_j(x_i) for the Lagrange basis on `nodes`."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    n = len(nodes)
    # barycentric weights
    w = np.ones(n)
    for j in range(n):
        for m in range(n):
            if m != j:
                w[j] /= nodes[j] - nodes[m]
    out = np.zeros((len(x), n))
    for i, xi in enumerate(x):
        diff = xi - nodes
        hit = np.nonzero(np.abs(diff) < 1e-14)[0]
        if len(hit):
            out[i, hit[0]] = 1.0
            continue
        terms = w / diff
        out[i] = terms / np.sum(terms)
    return out


class GlobalDofMap:
    """Global numbering: mesh vertices, then k-1 DOFs per edge (ordered from
    the lower to the higher vertex index), then moments cell by cell."""

    def __init__(self, mesh: PolygonalMesh, k: int):
        self.mesh = mesh
        self.k = k
        self.n_moment = cell_basis_dim(k - 2) if k >= 2 else 0
        self.vertex_offset = 0
        self.edge_offset = mesh.n_vertices
        self.moment_offset = mesh.n_vertices + mesh.n_edges * (k - 1)
        self.n_dofs = self.moment_offset + mesh.n_cells * self.n_moment
        self._cache: dict = {}

    def cell_dofs(self, cell: int) -> np.ndarray:
        got = self._cache.get(cell)
        if got is not None:
            return got
        mesh, k = self.mesh, self.k
        loop = mesh.cells[cell]
        nv = len(loop)
        dofs = list(loop)
        for i, e in enumerate(mesh.cell_edges(cell)):
            a, b = loop[i], loop[(i + 1) % nv]
            base = self.edge_offset + e * (k - 1)
            if a < b:
                dofs += [base + j for j in range(k - 1)]
            else:
                dofs += [base + (k - 2 - j) for j in range(k - 1)]
        base = self.moment_offset + cell * self.n_moment
        dofs += [base + m for m in range(self.n_moment)]
        arr = np.array(dofs, dtype=int)
        self._cache[cell] = arr
        return arr

    def edge_value_dofs(self, edge: int) -> np.ndarray:
        """Global DOFs of the k+1 GL values on an edge, from the low-index to
        the high-index vertex."""
        a, b = self.mesh.edges[edge]
        base = self.edge_offset + edge * (self.k - 1)
        return np.array([a, *range(base, base + self.k - 1), b], dtype=int)


def build_element(mesh: PolygonalMesh, cell: int, k: int, stab: str = "d_recipe",
                  basis_mode: str = "auto", cell_exactness: int | None = None) -> LocalVemElement:
    """Construct the order-k element on one cell.

    stab: 'euclidean' (identity on the DOF product) or 'd_recipe' (diagonal
    weights max(diag(K_c), trace(K_c)/n_dofs)).  basis_mode: 'raw', 'ortho',
    or 'auto' (orthonormalized for k >= 3).
    """
    if k < 1:
        raise ValueError("order k must be >= 1")
    if stab not in STABILIZATIONS:
        raise ValueError(f"unknown stabilization {stab!r}")
    loop = mesh.cells[cell]
    nv = len(loop)
    verts = mesh.vertices[loop]
    xK = mesh.cell_centroids[cell]
    hK = float(mesh.cell_diameters[cell])
    area = float(mesh.cell_areas[cell])

    quad = cell_quadrature(mesh, cell, cell_exactness if cell_exactness is not None else 2 * k + 2)
    basis = CellPolyBasis(k, xK, hK, cell_index=cell)
    if basis_mode == "ortho" or (basis_mode == "auto" and k >= 3):
        basis = orthonormalize(basis, quad)
    npoly = basis.dim

    # edge geometry and GL nodes (the point DOFs)
    glx, glw = gauss_lobatto(k + 1)
    edge_len = np.zeros(nv)
    edge_nrm = np.zeros((nv, 2))
    gl_nodes = []
    gl_weights = []
    for i in range(nv):
        a = verts[i]
        b = verts[(i + 1) % nv]
        d = b - a
        ln = float(np.hypot(*d))
        edge_len[i] = ln
        edge_nrm[i] = np.array([d[1], -d[0]]) / ln
        mid = 0.5 * (a + b)
        gl_nodes.append(mid[None, :] + 0.5 * glx[:, None] * d[None, :])
        gl_weights.append(0.5 * ln * glw)
    perimeter = float(np.sum(edge_len))

    layout = DofLayout(
        k=k,
        n_vertices=nv,
        point_coords=np.vstack([verts] + [nodes[1:-1] for nodes in gl_nodes]) if k > 1 else verts.copy(),
        moment_exponents=monomial_exponents(k - 2) if k >= 2 else [],
    )
    n_dofs = layout.n_dofs
    n_mom = layout.n_moment
    mom_cols = np.arange(layout.n_point, n_dofs)

    # D: DOFs of each basis polynomial.  Moment DOFs weigh against the raw
    # scaled monomials up to k = 3; at k = 4 the raw duals carry energies
    # near 1e5, which a diagonal stabilization amplifies past the kernel
    # tolerances, so the weight family is orthonormalized in the
    # area-normalized L2 product (its first member stays exactly 1).
    D = np.zeros((n_dofs, npoly))
    D[: layout.n_point] = basis.eval(layout.point_coords)
    mom_family = None
    moment_to_raw = None
    fam_m = None
    fam_gram = None
    if k >= 2:
        mom_family = CellPolyBasis(k - 2, xK, hK)
        if basis.mode == "ortho" and k >= 4:
            raw_vals = mom_family.eval(quad.points)
            gram_n = raw_vals.T @ (quad.weights[:, None] * raw_vals) / area
            chol = np.linalg.cholesky(0.5 * (gram_n + gram_n.T))
            fam_coef = np.linalg.solve(chol, mom_family.coef.T).T
            mom_family = replace(mom_family, coef=fam_coef, mode="ortho")
        fam_m = mom_family.eval(quad.points)  # (nq, n_mom)
        vals_q = basis.eval(quad.points)
        D[mom_cols] = fam_m.T @ (quad.weights[:, None] * vals_q) / area
        fam_gram = fam_m.T @ (quad.weights[:, None] * fam_m)
        fam_gram = 0.5 * (fam_gram + fam_gram.T)
        moment_to_raw = np.linalg.inv(mom_family.coef).T

    # grad-grad Gram of the basis
    gx, gy = basis.eval_gradient(quad.points)
    stiff_gram = gx.T @ (quad.weights[:, None] * gx) + gy.T @ (quad.weights[:, None] * gy)
    stiff_gram = 0.5 * (stiff_gram + stiff_gram.T)

    # B: right sides of the projector system, row 0 fixes the boundary mean
    B = np.zeros((npoly, n_dofs))
    if k >= 2:
        lap = basis.laplacian_in_raw(k - 2)  # raw coeffs, (n_mom, npoly)
        lap_fam = np.linalg.solve(mom_family.coef, lap)
        B[:, mom_cols] -= area * lap_fam.T
    bmean = np.zeros(n_dofs)
    for i in range(nv):
        pdofs = layout.edge_point_dofs(i)
        ngx, ngy = basis.eval_gradient(gl_nodes[i])
        dn = edge_nrm[i, 0] * ngx + edge_nrm[i, 1] * ngy  # (k+1, npoly)
        for j, dof in enumerate(pdofs):
            B[:, dof] += gl_weights[i][j] * dn[j]
            bmean[dof] += gl_weights[i][j] / perimeter
    B[0, :] = bmean

    G = stiff_gram.copy()
    bvals = np.concatenate([basis.eval(nodes) * gw[:, None] for nodes, gw in zip(gl_nodes, gl_weights)])
    G[0, :] = np.sum(bvals, axis=0) / perimeter

    try:
        pinabla = np.linalg.solve(G, B)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"projector system singular on cell {cell}") from exc

    consistency = pinabla.T @ stiff_gram @ pinabla
    consistency = 0.5 * (consistency + consistency.T)

    resid = np.eye(n_dofs) - D @ pinabla
    if stab == "euclidean":
        weights = np.ones(n_dofs)
    else:
        floor = np.trace(consistency) / n_dofs
        weights = np.maximum(np.diag(consistency), floor)
    stability = resid.T @ (weights[:, None] * resid)
    stability = 0.5 * (stability + stability.T)

    pi0 = None
    if k >= 2:
        sel = np.zeros((n_mom, n_dofs))
        sel[np.arange(n_mom), mom_cols] = 1.0
        # family coefficients of Pi0_{k-2}, then back to raw monomials
        pi0 = mom_family.coef @ (area * np.linalg.solve(fam_gram, sel))

    return LocalVemElement(
        cell=cell,
        k=k,
        layout=layout,
        basis=basis,
        quad=quad,
        area=area,
        perimeter=perimeter,
        diameter=hK,
        edge_lengths=edge_len,
        edge_normals=edge_nrm,
        pinabla=pinabla,
        dof_of_poly=D,
        stiff_gram=stiff_gram,
        consistency=consistency,
        stability=stability,
        stiffness=consistency + stability,
        pi0_km2=pi0,
        boundary_mean=bmean,
        moment_family=mom_family,
        moment_to_raw=moment_to_raw,
        stab_label=stab,
    )


def build_all_elements(mesh: PolygonalMesh, k: int, stab: str = "d_recipe",
                       basis_mode: str = "auto") -> list:
    return [build_element(mesh, c, k, stab=stab, basis_mode=basis_mode)
            for c in range(mesh.n_cells)]


def interpolate(element: LocalVemElement, u) -> np.ndarray:
    """DOF vector of the interpolant of a scalar field (callable on (n, 2))."""
    dofs = np.zeros(element.n_dofs)
    pts = element.layout.point_coords
    dofs[: element.layout.n_point] = np.asarray(u(pts), dtype=float)
    if element.layout.n_moment:
        vals = np.asarray(u(element.quad.points), dtype=float)
        fam = element.moment_family.eval(element.quad.points)
        dofs[element.layout.n_point:] = fam.T @ (element.quad.weights * vals) / element.area
    return dofs


def load_vector(element: LocalVemElement, f) -> np.ndarray:
    """Computable source functional approximating v -> int_K f v.

    k = 1: (int_K f) times the boundary mean of v.  k >= 2: the moment
    projection of f tested against v plus an energy-projection correction,

        int_K f Pi-nabla(v) + int_K Pi0_{k-2}(f) (v - Pi-nabla(v)),

    which is exact whenever f has degree <= k - 2 (so polynomial patch
    solutions are reproduced) and whose consistency error pairs one order
    better than the plain moment load, keeping the L2 rate at k + 1 for
    every k.
    """
    wq = element.quad.weights
    fv = np.asarray(f(element.quad.points), dtype=float)
    if element.k == 1:
        return float(wq @ fv) * element.boundary_mean
    raw_basis = CellPolyBasis(element.k - 2, element.basis.center, element.basis.diameter)
    raw_vals = raw_basis.eval(element.quad.points)
    gram = raw_vals.T @ (wq[:, None] * raw_vals)
    cf = np.linalg.solve(0.5 * (gram + gram.T), raw_vals.T @ (wq * fv))
    pf = raw_vals @ cf  # Pi0_{k-2} f at the quadrature points
    poly_vals = element.basis.eval(element.quad.points)
    b = element.pinabla.T @ (poly_vals.T @ (wq * (fv - pf)))
    b[element.layout.n_point:] += element.area * (element.moment_to_raw.T @ cf)
    return b


def project_gradient_l2(element: LocalVemElement, dofs: np.ndarray) -> tuple[np.ndarray, CellPolyBasis]:
    """Componentwise L2 projection of the gradient onto P_{k-1}.

    Returns (coeffs, basis) with coeffs of shape (2, dim P_{k-1}) in the raw
    scaled-monomial basis; computable from the DOFs by integration by parts.
    """
    k = element.k
    out_basis = CellPolyBasis(k - 1, element.basis.center, element.basis.diameter)
    exps = out_basis.exponents
    nb = out_basis.dim
    gram = out_basis.eval(element.quad.points)
    gram = gram.T @ (element.quad.weights[:, None] * gram)
    gram = 0.5 * (gram + gram.T)

    # moment part: int_K v dc(m_beta), with dc(m_beta) in raw P_{k-2}
    rhs = np.zeros((2, nb))
    if k >= 2:
        mom_exps = {e: i for i, e in enumerate(element.layout.moment_exponents)}
        mom_vals = element.raw_moments(dofs)
        h = element.basis.diameter
        for bi, (a1, a2) in enumerate(exps):
            if a1 > 0:
                rhs[0, bi] -= element.area * (a1 / h) * mom_vals[mom_exps[(a1 - 1, a2)]]
            if a2 > 0:
                rhs[1, bi] -= element.area * (a2 / h) * mom_vals[mom_exps[(a1, a2 - 1)]]

    # boundary part via the GL point values
    glx, glw = gauss_lobatto(k + 1)
    loop_pts = element.layout.point_coords[: element.layout.n_vertices]
    for i in range(element.layout.n_vertices):
        a = loop_pts[i]
        b = loop_pts[(i + 1) % element.layout.n_vertices]
        nodes = 0.5 * (a + b)[None, :] + 0.5 * glx[:, None] * (b - a)[None, :]
        w = 0.5 * element.edge_lengths[i] * glw
        pdofs = element.layout.edge_point_dofs(i)
        vvals = dofs[pdofs]
        mvals = out_basis.eval(nodes)
        nrm = element.edge_normals[i]
        contrib = mvals.T @ (w * vvals)
        rhs[0] += nrm[0] * contrib
        rhs[1] += nrm[1] * contrib

    coeffs = np.linalg.solve(gram, rhs.T).T
    return coeffs, out_basis
