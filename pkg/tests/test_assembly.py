import math

import numpy as np
import pytest
import scipy.sparse as sp

from porousflow.assembly import (
    assemble_a0,
    assemble_b,
    assemble_c0,
    assemble_c1,
    assemble_load,
    assemble_mass_phi_rhs,
    dump_matrix,
    korn_constant_estimate,
    make_context,
    pressure_volume_vector,
    trilinear_a1_quadrature,
)
from porousflow.fem import AnalyticVectorField, interpolate
from porousflow.mesh import generate_rect_mesh
from porousflow.porous import PhysicalParams, alpha_constant, builtin_porosity


def const_velocity_coeffs(ctx, c):
    f = interpolate(ctx.vspace, lambda p: np.broadcast_to(
        np.asarray(c, float), (len(p), 2)).copy())
    return f


def test_a0_quadratic_form_of_linear_field(unit_ctx, params):
    # u = (x, -y): D = diag(1, -1), so 2 mu (D, D) = 4 mu |Omega|
    u = interpolate(unit_ctx.vspace, lambda p: np.column_stack(
        [p[:, 0], -p[:, 1]]))
    a0 = assemble_a0(unit_ctx)
    val = float(u.coefficients @ (a0 @ u.coefficients))
    assert val == pytest.approx(4.0 * params.mu, rel=1e-12)
    assert val == pytest.approx(3.556e-2, rel=1e-3)


def test_a0_constant_field_in_kernel(unit_ctx):
    u = const_velocity_coeffs(unit_ctx, (2.0, -3.0))
    a0 = assemble_a0(unit_ctx)
    assert np.abs(a0 @ u.coefficients).max() < 1e-13


def test_a0_symmetry_and_psd(unit_ctx, rng):
    a0 = assemble_a0(unit_ctx)
    assert abs(a0 - a0.T).max() < 1e-12
    for _ in range(5):
        x = rng.normal(size=a0.shape[0])
        assert x @ (a0 @ x) >= -1e-12


def test_b_against_divergence(unit_ctx):
    v = interpolate(unit_ctx.vspace, lambda p: np.column_stack(
        [p[:, 0], np.zeros(len(p))]))
    q = interpolate(unit_ctx.pspace, lambda p: np.ones(len(p)))
    b = assemble_b(unit_ctx)
    assert float(q.coefficients @ (b @ v.coefficients)) \
        == pytest.approx(-1.0, rel=1e-12)


def test_b_annihilates_divergence_free_quadratic(unit_ctx):
    # velocity from the stream function x^3 + x^2 y - y^3 (exactly in P2)
    def vel(p):
        x, y = p[:, 0], p[:, 1]
        return np.column_stack([x ** 2 - 3 * y ** 2, -3 * x ** 2 - 2 * x * y])

    v = interpolate(unit_ctx.vspace, vel)
    b = assemble_b(unit_ctx)
    assert np.abs(b @ v.coefficients).max() < 1e-12


def test_b_constant_velocity(unit_ctx):
    v = const_velocity_coeffs(unit_ctx, (1.0, 1.0))
    b = assemble_b(unit_ctx)
    assert np.abs(b @ v.coefficients).max() < 1e-13


def test_c0_vanishes_for_unit_porosity(unit_ctx):
    c0 = assemble_c0(unit_ctx)
    assert abs(c0).max() == 0.0


def test_c0_constant_porosity_value(unit_mesh, params):
    ctx = make_context(unit_mesh, builtin_porosity("constant", value=0.5),
                       params)
    c0 = assemble_c0(ctx)
    u = const_velocity_coeffs(ctx, (1.0, 0.0))
    val = float(u.coefficients @ (c0 @ u.coefficients))
    # oracle: phi/K(0.5) = a(1-phi)^2/(d_p phi)^2 = 150*0.25/(0.05*0.5)^2
    oracle = params.mu * 150.0 * 0.25 / (0.05 * 0.5) ** 2
    assert oracle == pytest.approx(533.4, rel=1e-12)
    assert val == pytest.approx(oracle, rel=1e-12)


def test_c0_dominates_alpha_mass(unit_mesh, params, rng):
    porosity = builtin_porosity("mms-sine")
    ctx = make_context(unit_mesh, porosity, params)
    c0 = assemble_c0(ctx)
    m = ctx.mass_matrix()
    alpha = alpha_constant(porosity, params)
    for _ in range(5):
        x = rng.normal(size=c0.shape[0])
        assert x @ (c0 @ x) >= params.mu * alpha * (x @ (m @ x)) - 1e-10


def test_c1_zero_weight(unit_mesh, params):
    ctx = make_context(unit_mesh, builtin_porosity("constant", value=0.5),
                       params)
    theta = const_velocity_coeffs(ctx, (0.0, 0.0))
    c1 = assemble_c1(theta, ctx)
    assert abs(c1).max() == 0.0


def test_c1_constant_weight_value(unit_mesh, params):
    ctx = make_context(unit_mesh, builtin_porosity("constant", value=0.5),
                       params)
    theta = const_velocity_coeffs(ctx, (1.0, 0.0))
    u = const_velocity_coeffs(ctx, (1.0, 0.0))
    c1 = assemble_c1(theta, ctx)
    val = float(u.coefficients @ (c1 @ u.coefficients))
    # oracle: rho * F(0.5) * 0.5 / sqrt(K(0.5)) = rho * 70
    assert val == pytest.approx(params.rho * 70.0, rel=1e-12)
    assert val == pytest.approx(69.657, rel=1e-4)


def test_c1_nonnegative(unit_mesh, params, rng):
    ctx = make_context(unit_mesh, builtin_porosity("mms-sine"), params)
    theta = interpolate(ctx.vspace, lambda p: np.column_stack(
        [np.sin(p[:, 0]), np.cos(p[:, 1])]))
    c1 = assemble_c1(theta, ctx)
    assert abs(c1 - c1.T).max() < 1e-12
    for _ in range(5):
        x = rng.normal(size=c1.shape[0])
        assert x @ (c1 @ x) >= -1e-12


def test_load_zero(unit_ctx):
    rhs = assemble_load(lambda p, t: np.zeros((len(p), 2)), unit_ctx, 0.0)
    assert np.abs(rhs).max() == 0.0


def test_load_constant_matches_mass_rows(unit_ctx):
    c = np.array([1.3, -0.6])
    rhs = assemble_load(lambda p, t: np.broadcast_to(c, (len(p), 2)).copy(),
                        unit_ctx, 0.0)
    u = const_velocity_coeffs(unit_ctx, c)
    m = unit_ctx.mass_matrix()
    assert rhs == pytest.approx(m @ u.coefficients, abs=1e-12)


def test_load_mms_forcing_finite(pi_mesh, params, mms_case):
    ctx = make_context(pi_mesh, mms_case.porosity, params)
    rhs = assemble_load(mms_case.f, ctx, 0.0)
    assert np.isfinite(rhs).all()
    assert np.abs(rhs).max() > 0.0


def test_trilinear_zero_cases(unit_ctx):
    zero = AnalyticVectorField(lambda p: np.zeros((len(p), 2)),
                               lambda p: np.zeros((len(p), 2, 2)))
    some = AnalyticVectorField(
        lambda p: np.column_stack([np.sin(p[:, 0]), p[:, 1]]),
        lambda p: np.stack([np.column_stack([np.cos(p[:, 0]),
                                             np.zeros(len(p))]),
                            np.column_stack([np.zeros(len(p)),
                                             np.ones(len(p))])], axis=1))
    const = AnalyticVectorField(lambda p: np.ones((len(p), 2)),
                                lambda p: np.zeros((len(p), 2, 2)))
    assert trilinear_a1_quadrature(zero, some, some, unit_ctx) == 0.0
    assert trilinear_a1_quadrature(some, const, some, unit_ctx) \
        == pytest.approx(0.0, abs=1e-14)


def test_trilinear_value(unit_ctx, params):
    # u = (1, 0), w = (x y, 0), v = (1, 0): integral of y over unit square
    u = AnalyticVectorField(lambda p: np.column_stack(
        [np.ones(len(p)), np.zeros(len(p))]), None)
    w_grad = lambda p: np.stack(
        [np.column_stack([p[:, 1], p[:, 0]]),
         np.zeros((len(p), 2))], axis=1)
    w = AnalyticVectorField(None, w_grad)
    val = trilinear_a1_quadrature(u, w, u, unit_ctx)
    assert val == pytest.approx(params.rho * 0.5, rel=1e-12)


def test_mass_phi_rhs_zero_history(unit_ctx):
    rhs, m_scaled = assemble_mass_phi_rhs(
        lambda pts, hints: np.zeros((len(pts), 2)), unit_ctx, 0.1, "initial")
    assert np.abs(rhs).max() == 0.0
    assert m_scaled.shape == (unit_ctx.vspace.dof_count,) * 2


def test_mass_scaling_ratio(unit_ctx):
    zero = lambda pts, hints: np.zeros((len(pts), 2))
    _, m_init = assemble_mass_phi_rhs(zero, unit_ctx, 0.1, "initial")
    _, m_gen = assemble_mass_phi_rhs(zero, unit_ctx, 0.1, "general")
    ratio = m_gen.diagonal() / m_init.diagonal()
    assert ratio == pytest.approx(np.full_like(ratio, 1.5), rel=1e-14)
    with pytest.raises(ValueError):
        assemble_mass_phi_rhs(zero, unit_ctx, 0.1, "euler")


def test_mass_phi_rhs_uniform_fixed_point(unit_mesh, params):
    from porousflow.characteristics import ab2_material_terms
    phi_bar = 0.7
    ctx = make_context(unit_mesh, builtin_porosity("constant", value=phi_bar),
                       params)
    c = np.array([0.4, -0.2])
    u = const_velocity_coeffs(ctx, phi_bar * c)
    u_at = ctx.velocity_at_quad(u).reshape(-1, 2)

    def bracket(pts, hints):
        val, _ = ab2_material_terms(
            u, u, ctx.porosity, 0.1, pts, hints, u_prev_at=u_at,
            u_prev2_at=u_at,
            g_prev=lambda p: np.broadcast_to(phi_bar * c, (len(p), 2)).copy(),
            g_prev2=lambda p: np.broadcast_to(phi_bar * c, (len(p), 2)).copy())
        return val

    rhs, m_scaled = assemble_mass_phi_rhs(bracket, ctx, 0.1, "general")
    residual = m_scaled @ u.coefficients - rhs
    assert np.abs(residual).max() < 1e-10


def test_korn_estimate_positive_and_bounds(unit_ctx, params, rng):
    beta0 = korn_constant_estimate(unit_ctx)
    assert beta0 > 0.0
    a0 = assemble_a0(unit_ctx)
    from porousflow.assembly import _vector_gradient_gram
    h1 = unit_ctx.mass_matrix() + _vector_gradient_gram(unit_ctx)
    from porousflow.fem import boundary_nodes
    from porousflow.mesh import BoundaryTag
    fixed_nodes = boundary_nodes(unit_ctx.vspace, {BoundaryTag.DIRICHLET})
    fixed = np.concatenate([2 * fixed_nodes, 2 * fixed_nodes + 1])
    for _ in range(10):
        x = rng.normal(size=a0.shape[0])
        x[fixed] = 0.0
        lhs = x @ (a0 @ x)
        rhs = 2.0 * params.mu * beta0 ** 2 * (x @ (h1 @ x))
        assert lhs >= rhs * (1.0 - 1e-8)


def test_forms_converge_under_refinement(params):
    # a0 on interpolants of u = (sin y, 0): exact value mu * pi^2 / 2
    exact = params.mu * math.pi ** 2 / 2.0
    errs = []
    for n in (8, 16, 32):
        mesh = generate_rect_mesh((0.0, math.pi), (0.0, math.pi), n)
        ctx = make_context(mesh, builtin_porosity("constant", value=1.0),
                           params)
        u = interpolate(ctx.vspace, lambda p: np.column_stack(
            [np.sin(p[:, 1]), np.zeros(len(p))]))
        a0 = assemble_a0(ctx)
        errs.append(abs(float(u.coefficients @ (a0 @ u.coefficients)) - exact))
    order1 = math.log2(errs[0] / errs[1])
    order2 = math.log2(errs[1] / errs[2])
    assert order1 >= 2.0 - 0.3
    assert order2 >= 2.0 - 0.3


def test_pressure_volume_vector(unit_ctx):
    c = pressure_volume_vector(unit_ctx)
    assert c.sum() == pytest.approx(1.0, rel=1e-12)  # total area


def test_matrix_market_roundtrip(unit_ctx, tmp_path):
    from scipy.io import mmread
    b = assemble_b(unit_ctx)
    path = tmp_path / "b.mtx"
    dump_matrix(b, path)
    back = mmread(path).tocsr()
    assert abs(b - back).max() < 1e-15
