"""Scaled monomial bases on cells and edges.

Cell bases are spanned by ((x - x_K)/h_K)^a * ((y - y_K)/h_K)^b in graded
lexicographic order of the exponents; edge bases by powers of the signed
arclength from the edge midpoint divided by the edge length.  Either kind
can be L2-orthonormalized on its entity, which replaces the change-of-basis
matrix from the raw monomials.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .quadrature import QuadratureRule

__all__ = [
    "CellPolyBasis",
    "EdgePolyBasis",
    "cell_basis_dim",
    "monomial_exponents",
    "eval_basis",
    "eval_gradient",
    "gram_matrix",
    "orthonormalize",
    "directional_derivative_matrix",
]


def cell_basis_dim(k: int) -> int:
    return (k + 1) * (k + 2) // 2


def monomial_exponents(k: int) -> list[tuple[int, int]]:
    """Exponent pairs of the 2D monomials up to degree k, graded lex order."""
    out = []
    for d in range(k + 1):
        for a2 in range(d + 1):
            out.append((d - a2, a2))
    return out


def _raw_derivative_matrices(k: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Matrices of d/dx and d/dy on raw scaled-monomial coefficients (P_k -> P_k)."""
    exps = monomial_exponents(k)
    index = {e: i for i, e in enumerate(exps)}
    n = len(exps)
    dx = np.zeros((n, n))
    dy = np.zeros((n, n))
    for j, (a1, a2) in enumerate(exps):
        if a1 > 0:
            dx[index[(a1 - 1, a2)], j] = a1 / h
        if a2 > 0:
            dy[index[(a1, a2 - 1)], j] = a2 / h
    return dx, dy


@dataclass(frozen=True)
class CellPolyBasis:
    """Polynomial basis of degree <= k on one cell.

    `coef[:, j]` holds the raw scaled-monomial coefficients of basis
    function j, so `coef` is the identity in raw mode and upper triangular
    after orthonormalization (the first function stays constant).
    """

    k: int
    center: np.ndarray
    diameter: float
    mode: str = "raw"
    coef: np.ndarray = field(default=None)  # type: ignore[assignment]
    cell_index: int | None = None

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("polynomial order must be >= 0")
        if self.coef is None:
            object.__setattr__(self, "coef", np.eye(self.dim))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def dim(self) -> int:
        return cell_basis_dim(self.k)

    @property
    def exponents(self) -> list[tuple[int, int]]:
        return monomial_exponents(self.k)

    def _scaled_powers(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        xi = (p[:, 0] - self.center[0]) / self.diameter
        eta = (p[:, 1] - self.center[1]) / self.diameter
        powx = np.vander(xi, self.k + 1, increasing=True)
        powy = np.vander(eta, self.k + 1, increasing=True)
        return powx, powy

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Values of all basis functions at the points, shape (npts, dim)."""
        powx, powy = self._scaled_powers(points)
        raw = np.column_stack([powx[:, a1] * powy[:, a2] for a1, a2 in self.exponents])
        return raw @ self.coef

    def eval_gradient(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """x- and y-derivatives of all basis functions, each (npts, dim)."""
        powx, powy = self._scaled_powers(points)
        h = self.diameter
        cols_x = []
        cols_y = []
        for a1, a2 in self.exponents:
            gx = (a1 / h) * powx[:, a1 - 1] * powy[:, a2] if a1 > 0 else np.zeros(len(powx))
            gy = (a2 / h) * powx[:, a1] * powy[:, a2 - 1] if a2 > 0 else np.zeros(len(powx))
            cols_x.append(gx)
            cols_y.append(gy)
        return np.column_stack(cols_x) @ self.coef, np.column_stack(cols_y) @ self.coef

    def laplacian_in_raw(self, kout: int) -> np.ndarray:
        """Coefficients of the Laplacian of each basis function in the raw
        scaled-monomial basis of degree <= kout (requires kout >= k - 2)."""
        if kout < max(self.k - 2, 0):
            raise ValueError("target degree too small to hold the Laplacian")
        exps_out = monomial_exponents(kout)
        index = {e: i for i, e in enumerate(exps_out)}
        h2 = self.diameter**2
        lap = np.zeros((len(exps_out), self.dim))
        for j, (a1, a2) in enumerate(self.exponents):
            if a1 >= 2:
                lap[index[(a1 - 2, a2)], j] += a1 * (a1 - 1) / h2
            if a2 >= 2:
                lap[index[(a1, a2 - 2)], j] += a2 * (a2 - 1) / h2
        return lap @ self.coef


def eval_basis(basis, points: np.ndarray) -> np.ndarray:
    return basis.eval(points)


def eval_gradient(basis: CellPolyBasis, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return basis.eval_gradient(points)


def gram_matrix(basis, quad: QuadratureRule) -> np.ndarray:
    """L2 Gram matrix of the basis, symmetric positive definite."""
    vals = basis.eval(quad.points)
    g = vals.T @ (quad.weights[:, None] * vals)
    return 0.5 * (g + g.T)


def orthonormalize(basis, quad: QuadratureRule):
    """Return a basis whose Gram matrix on the entity is the identity.

    Applies the inverse transposed Cholesky factor of the Gram matrix to the
    coefficients; idempotent up to roundoff.
    """
    g = gram_matrix(basis, quad)
    try:
        chol = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        where = f"cell {basis.cell_index}" if getattr(basis, "cell_index", None) is not None else "entity"
        raise np.linalg.LinAlgError(
            f"Gram matrix numerically singular on {where} "
            f"(condition estimate {np.linalg.cond(g):.3e})"
        ) from exc
    # coef' = coef * L^{-T}: triangular, keeps function 0 constant
    new_coef = np.linalg.solve(chol, basis.coef.T).T
    return replace(basis, coef=new_coef, mode="ortho")


def directional_derivative_matrix(basis: CellPolyBasis, sigma, j: int = 1) -> np.ndarray:
    """Matrix of the j-th directional derivative on basis coefficients.

    The result maps coefficients of p to coefficients of the derivative in
    the same basis (the image lies in the degree k - j subspace; the map is
    nilpotent).  M_0 is the identity and M_j = M_1^j.
    """
    sigma = np.asarray(sigma, dtype=float)
    if abs(np.hypot(*sigma) - 1.0) > 1e-12:
        raise ValueError("sigma must be a unit vector")
    if j < 0:
        raise ValueError("derivative order must be >= 0")
    dx, dy = _raw_derivative_matrices(basis.k, basis.diameter)
    m1_raw = sigma[0] * dx + sigma[1] * dy
    m1 = np.linalg.solve(basis.coef, m1_raw @ basis.coef)
    return np.linalg.matrix_power(m1, j)


@dataclass(frozen=True)
class EdgePolyBasis:
    """1D polynomial basis of degree <= k on an edge.

    Functions are powers of (s - s_mid)/h_f where s is arclength along the
    edge and h_f the edge length, optionally orthonormalized in L2 of the
    edge.
    """

    k: int
    midpoint: np.ndarray
    length: float
    tangent: np.ndarray
    mode: str = "raw"
    coef: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("polynomial order must be >= 0")
        if self.coef is None:
            object.__setattr__(self, "coef", np.eye(self.dim))
        object.__setattr__(self, "midpoint", np.asarray(self.midpoint, dtype=float))
        t = np.asarray(self.tangent, dtype=float)
        object.__setattr__(self, "tangent", t / np.hypot(*t))

    @classmethod
    def for_edge(cls, a, b, k: int, mode: str = "raw") -> "EdgePolyBasis":
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return cls(k=k, midpoint=0.5 * (a + b), length=float(np.hypot(*(b - a))), tangent=b - a, mode=mode)

    @property
    def dim(self) -> int:
        return self.k + 1

    def param(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return ((p - self.midpoint) @ self.tangent) / self.length

    def eval(self, points: np.ndarray) -> np.ndarray:
        s = self.param(points)
        raw = np.vander(s, self.dim, increasing=True)
        return raw @ self.coef
