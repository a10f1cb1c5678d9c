import numpy as np
import pytest

from polyvem import build_structured_mesh, build_voronoi_mesh
from polyvem.element import GlobalDofMap, build_all_elements, interpolate
from polyvem.linsys import schur_condense_bh, solve
from polyvem.study import compute_errors
from polyvem.weakbc import (
    MultiplierSpace,
    WeakBcConfig,
    assemble_bh,
    assemble_nitsche,
    boundary_norms,
    recover_multiplier,
)
from conftest import random_polynomial


def interpolant(mesh, elements, k, u):
    dm = GlobalDofMap(mesh, k)
    out = np.zeros(dm.n_dofs)
    for el in elements:
        out[dm.cell_dofs(el.cell)] = interpolate(el, u)
    return out


@pytest.mark.parametrize("k", [1, 2, 3, 4])
@pytest.mark.parametrize("kprime_off", [0, 1])
def test_bh_patch(unit_square_2x2, k, kprime_off):
    rng = np.random.default_rng(k)
    u, grad, f = random_polynomial(k, rng)
    cfg = WeakBcConfig(method="barbosa_hughes", k=k, kprime=k - kprime_off, alpha=0.001)
    els = build_all_elements(unit_square_2x2, k)
    mult = MultiplierSpace.create(unit_square_2x2, cfg.resolved_kprime)
    sys_ = assemble_bh(unit_square_2x2, els, mult, cfg, f, u)
    x = solve(sys_)
    dm = GlobalDofMap(unit_square_2x2, k)
    e1, e0 = compute_errors(unit_square_2x2, els, x[:dm.n_dofs], u, grad)
    assert e1 <= 1e-9 and e0 <= 1e-9
    # multiplier equals -grad u . nu in the boundary norm
    bn = boundary_norms(unit_square_2x2, cfg)
    lam_err = bn.minus_half_mult(
        mult, x[dm.n_dofs:],
        fn=lambda p, e: -(grad(p) @ unit_square_2x2.edge_normals[e]))
    assert lam_err <= 1e-8


def test_bh_linear_patch_explicit(unit_square_2x2):
    # u = x + y with alpha = 0.01: DOFs and multiplier to 1e-9
    u = lambda p: p[:, 0] + p[:, 1]
    cfg = WeakBcConfig(method="barbosa_hughes", k=1, alpha=0.01)
    els = build_all_elements(unit_square_2x2, 1)
    mult = MultiplierSpace.create(unit_square_2x2, 1)
    x = solve(assemble_bh(unit_square_2x2, els, mult, cfg,
                          lambda p: np.zeros(len(p)), u))
    ui = interpolant(unit_square_2x2, els, 1, u)
    dm = GlobalDofMap(unit_square_2x2, 1)
    assert np.max(np.abs(x[:dm.n_dofs] - ui)) <= 1e-9


@pytest.mark.parametrize("k", [1, 2, 3])
def test_nitsche_patch(unit_square_2x2, k):
    rng = np.random.default_rng(10 + k)
    u, grad, f = random_polynomial(k, rng)
    cfg = WeakBcConfig(method="nitsche", k=k, gamma=1000.0)
    els = build_all_elements(unit_square_2x2, k)
    uh = solve(assemble_nitsche(unit_square_2x2, els, cfg, f, u))
    e1, e0 = compute_errors(unit_square_2x2, els, uh, u, grad)
    assert e1 <= 1e-8 and e0 <= 1e-8


def test_zero_data_zero_solution(unit_square_2x2):
    zero = lambda p: np.zeros(len(p))
    for method in ("barbosa_hughes", "nitsche"):
        cfg = WeakBcConfig(method=method, k=2, alpha=0.001, gamma=1000.0)
        els = build_all_elements(unit_square_2x2, 2)
        if method == "barbosa_hughes":
            mult = MultiplierSpace.create(unit_square_2x2, 2)
            x = solve(assemble_bh(unit_square_2x2, els, mult, cfg, zero, zero))
        else:
            x = solve(assemble_nitsche(unit_square_2x2, els, cfg, zero, zero))
        assert np.max(np.abs(x)) <= 1e-12


@pytest.mark.parametrize("method", ["barbosa_hughes", "nitsche"])
def test_matrix_symmetry(unit_square_2x2, method):
    u = lambda p: p[:, 0] ** 2 - p[:, 1]
    f = lambda p: -2.0 * np.ones(len(p))
    cfg = WeakBcConfig(method=method, k=2, alpha=0.001, gamma=1000.0)
    els = build_all_elements(unit_square_2x2, 2)
    if method == "barbosa_hughes":
        mult = MultiplierSpace.create(unit_square_2x2, 2)
        sys_ = assemble_bh(unit_square_2x2, els, mult, cfg, f, u)
    else:
        sys_ = assemble_nitsche(unit_square_2x2, els, cfg, f, u)
    assert sys_.symmetric
    assert sys_.check_symmetry() <= 1e-12


def test_multiplier_recovery_signs(unit_square_2x2):
    # u = x: flux -du/dnu is -1 on the right edge, 0 on the bottom edge
    u = lambda p: p[:, 0]
    cfg = WeakBcConfig(method="nitsche", k=1, gamma=100.0)
    els = build_all_elements(unit_square_2x2, 1)
    uh = solve(assemble_nitsche(unit_square_2x2, els, cfg, lambda p: np.zeros(len(p)), u))
    mult = MultiplierSpace.create(unit_square_2x2, 1)
    lam = recover_multiplier(uh, unit_square_2x2, els, cfg, u, mult=mult)
    m = unit_square_2x2
    for e in m.boundary_edges:
        coeffs = mult.edge_coeffs(lam, int(e))
        val = mult.bases[mult.edge_position[int(e)]].eval(m.edge_midpoints[e][None, :]) @ coeffs
        want = -m.edge_normals[e][0]  # -grad(x).nu = -nu_x
        assert abs(val[0] - want) <= 1e-9


@pytest.mark.parametrize("k", [1, 2, 3])
def test_bh_nitsche_condensation_equivalence(k):
    mesh = build_voronoi_mesh(None, 12, lloyd_iters=1, rng_seed=6)
    els = build_all_elements(mesh, k)
    alpha = 1e-3
    u = lambda p: np.cos(p[:, 0]) * np.sinh(p[:, 1]) + p[:, 0]
    f = lambda p: np.zeros(len(p))  # harmonic
    cfgb = WeakBcConfig(method="barbosa_hughes", k=k, alpha=alpha)
    cfgn = WeakBcConfig(method="nitsche", k=k, gamma=1.0 / alpha)
    mult = MultiplierSpace.create(mesh, k)
    sys_bh = assemble_bh(mesh, els, mult, cfgb, f, u)
    sys_n = assemble_nitsche(mesh, els, cfgn, f, u, mult=mult)
    cond = schur_condense_bh(sys_bh)
    scale = max(1.0, np.max(np.abs(sys_n.matrix.data)))
    assert np.max(np.abs((cond.matrix - sys_n.matrix).toarray())) <= 1e-10 * scale
    assert np.max(np.abs(cond.rhs - sys_n.rhs)) <= 1e-10 * max(1.0, np.max(np.abs(sys_n.rhs)))
    xb = solve(sys_bh)
    xn = solve(sys_n)
    nu = sys_n.n
    rel = np.max(np.abs(xb[:nu] - xn)) / max(np.max(np.abs(xn)), 1e-30)
    assert rel <= 1e-8
    # recovered multiplier agrees with the saddle solution (the iterative
    # refinement in the solver is what keeps this tight at k = 3, where the
    # saddle condition number reaches 1e14)
    lam = recover_multiplier(xn, mesh, els, cfgn, u, mult=mult)
    rel_l = np.max(np.abs(lam - xb[nu:])) / max(np.max(np.abs(xb[nu:])), 1e-30)
    assert rel_l <= 1e-8


def test_condensation_kprime_lower_differs(unit_square_2x2):
    # with k' = k-1 the condensed system runs but differs from the penalty one
    k = 2
    els = build_all_elements(unit_square_2x2, k)
    u = lambda p: p[:, 0] * p[:, 1]
    f = lambda p: np.zeros(len(p))
    cfgb = WeakBcConfig(method="barbosa_hughes", k=k, kprime=k - 1, alpha=1e-3)
    cfgn = WeakBcConfig(method="nitsche", k=k, gamma=1e3)
    mult = MultiplierSpace.create(unit_square_2x2, k - 1)
    sys_bh = assemble_bh(unit_square_2x2, els, mult, cfgb, f, u)
    cond = schur_condense_bh(sys_bh)
    sys_n = assemble_nitsche(unit_square_2x2, els, cfgn, f, u)
    diff = np.max(np.abs((cond.matrix - sys_n.matrix).toarray()))
    assert diff > 1e-6  # a genuinely different operator
    solve(cond)  # still solvable


def test_boundary_norm_constant_single_edge():
    mesh = build_structured_mesh((0, 0, 1, 1), 1, 1)
    cfg = WeakBcConfig(method="nitsche", k=1, gamma=10.0)
    bn = boundary_norms(mesh, cfg)
    e0 = mesh.boundary_edges[0]
    htil = mesh.cell_diameters[mesh.boundary_edge_cell(e0)]
    val = bn.minus_half(lambda p, e: np.where(e == e0, 1.0, 0.0) * np.ones(len(p)))
    assert abs(val - np.sqrt(htil * 1.0)) <= 1e-12
    assert bn.minus_half(lambda p, e: np.zeros(len(p))) == 0.0
    assert bn.half(lambda p, e: np.zeros(len(p))) == 0.0


def test_boundary_norm_duality(unit_square_2x2):
    cfg = WeakBcConfig(method="nitsche", k=2, gamma=10.0)
    bn = boundary_norms(unit_square_2x2, cfg)
    rng = np.random.default_rng(3)
    for _ in range(5):
        c1 = rng.standard_normal(3)
        c2 = rng.standard_normal(3)
        lam = lambda p, e: c1[0] + c1[1] * p[:, 0] + c1[2] * p[:, 1]
        phi = lambda p, e: c2[0] + c2[1] * p[:, 0] + c2[2] * p[:, 1]
        total = 0.0
        for e, htil, rule in bn._rules:
            total += rule.weights @ (lam(rule.points, e) * phi(rule.points, e))
        assert abs(total) <= bn.minus_half(lam) * bn.half(phi) + 1e-12


def test_gamma_monotone_definiteness(unit_square_2x2):
    els = build_all_elements(unit_square_2x2, 1)
    zero = lambda p: np.zeros(len(p))
    mins = []
    for gamma in (10.0, 100.0, 1000.0):
        cfg = WeakBcConfig(method="nitsche", k=1, gamma=gamma)
        a = assemble_nitsche(unit_square_2x2, els, cfg, zero, zero).matrix.toarray()
        n = len(a)
        ones = np.ones(n) / np.sqrt(n)
        p = np.eye(n) - np.outer(ones, ones)
        w = np.linalg.eigvalsh(p @ a @ p)
        mins.append(np.sort(w)[1])  # skip the deflated constant direction
    assert mins[0] <= mins[1] <= mins[2]


def test_mismatched_order_rejected(unit_square_2x2):
    els = build_all_elements(unit_square_2x2, 2)
    cfg = WeakBcConfig(method="nitsche", k=3, gamma=100.0)
    with pytest.raises(ValueError, match="order"):
        assemble_nitsche(unit_square_2x2, els, cfg,
                         lambda p: np.zeros(len(p)), lambda p: np.zeros(len(p)))


def test_config_validation_and_warnings():
    with pytest.raises(ValueError):
        WeakBcConfig(method="nitsche", k=2, kprime=1)
    with pytest.raises(ValueError):
        WeakBcConfig(method="barbosa_hughes", k=2, kprime=0)
    with pytest.raises(ValueError):
        WeakBcConfig(method="bogus", k=1)
    with pytest.warns(UserWarning):
        WeakBcConfig(method="barbosa_hughes", k=1, alpha=0.5)
    with pytest.warns(UserWarning):
        WeakBcConfig(method="nitsche", k=1, gamma=2.0)


def test_norm_one_positive(unit_square_2x2):
    k = 2
    els = build_all_elements(unit_square_2x2, k)
    dm = GlobalDofMap(unit_square_2x2, k)
    cfg = WeakBcConfig(method="nitsche", k=k, gamma=10.0)
    bn = boundary_norms(unit_square_2x2, cfg)
    u = interpolant(unit_square_2x2, els, k, lambda p: p[:, 0] + 0.5 * p[:, 1] ** 2)
    assert bn.one(els, dm, u) > 0.0
    zero = np.zeros(dm.n_dofs)
    assert bn.one(els, dm, zero) == 0.0
