import numpy as np
import pytest

from polyvem import build_structured_mesh


@pytest.fixture
def unit_square_1():
    return build_structured_mesh((0.0, 0.0, 1.0, 1.0), 1, 1)


@pytest.fixture
def unit_square_2x2():
    return build_structured_mesh((0.0, 0.0, 1.0, 1.0), 2, 2)


def random_polynomial(k: int, rng):
    """Global-coordinate polynomial of total degree k with callable value,
    gradient and source term f = -lap u."""
    exps = [(d - j, j) for d in range(k + 1) for j in range(d + 1)]
    coeffs = rng.standard_normal(len(exps))

    def u(p):
        p = np.atleast_2d(p)
        return sum(c * p[:, 0] ** a * p[:, 1] ** b for c, (a, b) in zip(coeffs, exps))

    def grad(p):
        p = np.atleast_2d(p)
        gx = sum(c * a * p[:, 0] ** (a - 1) * p[:, 1] ** b
                 for c, (a, b) in zip(coeffs, exps) if a > 0)
        gy = sum(c * b * p[:, 0] ** a * p[:, 1] ** (b - 1)
                 for c, (a, b) in zip(coeffs, exps) if b > 0)
        gx = gx if np.ndim(gx) else np.zeros(len(p))
        gy = gy if np.ndim(gy) else np.zeros(len(p))
        return np.column_stack([gx, gy])

    def f(p):
        p = np.atleast_2d(p)
        out = np.zeros(len(p))
        for c, (a, b) in zip(coeffs, exps):
            if a >= 2:
                out -= c * a * (a - 1) * p[:, 0] ** (a - 2) * p[:, 1] ** b
            if b >= 2:
                out -= c * b * (b - 1) * p[:, 0] ** a * p[:, 1] ** (b - 2)
        return out

    return u, grad, f
