import numpy as np
import pytest

from porousflow.characteristics import (
    ab2_material_term,
    ab2_material_terms,
    eval_at_upwind,
    lg1_material_term,
    lg1_material_terms,
    upwind_point,
)
from porousflow.fem import interpolate, velocity_space
from porousflow.mesh import BoundaryTag, generate_rect_mesh, locate_point
from porousflow.porous import builtin_porosity


def constant_field(space, c):
    c = np.asarray(c, dtype=float)
    return interpolate(space, lambda p: np.broadcast_to(c, (len(p), 2)).copy())


def test_upwind_point_identity():
    x = np.array([0.3, 0.4])
    assert upwind_point(x, np.zeros(2), 0.5) == pytest.approx(x)


def test_upwind_point_formula():
    got = upwind_point(np.array([1.0, 1.0]), np.array([2.0, 0.0]), 0.1)
    assert got == pytest.approx([0.8, 1.0])


def test_upwind_point_linear_in_tau():
    x = np.array([1.0, 1.0])
    v = np.array([0.4, -0.2])
    d1 = x - upwind_point(x, v, 0.05)
    d2 = x - upwind_point(x, v, 0.1)
    assert d2 == pytest.approx(2.0 * d1)


def test_upwind_point_requires_positive_tau():
    with pytest.raises(ValueError):
        upwind_point(np.zeros(2), np.ones(2), 0.0)


def test_eval_at_upwind_zero_advection(unit_mesh):
    space = velocity_space(unit_mesh)
    f = interpolate(space, lambda p: np.column_stack(
        [p[:, 0] + p[:, 1], p[:, 0] - p[:, 1]]))
    x = np.array([0.3, 0.6])
    res = eval_at_upwind(f, x, np.zeros(2), 0.1)
    assert res.status == "inside"
    assert res.value == pytest.approx([0.9, -0.3], abs=1e-13)


def test_eval_at_upwind_uniform_field(unit_mesh):
    space = velocity_space(unit_mesh)
    f = constant_field(space, (1.5, -0.5))
    res = eval_at_upwind(f, np.array([0.5, 0.5]), np.array([0.8, 0.3]), 0.2)
    assert res.value == pytest.approx([1.5, -0.5], abs=1e-13)


def test_eval_at_upwind_clamps_to_dirichlet_data(unit_mesh):
    space = velocity_space(unit_mesh)
    f = constant_field(space, (1.0, 1.0))
    g = lambda pts: np.zeros((len(pts), 2))
    res = eval_at_upwind(f, np.array([0.05, 0.5]), np.array([1.0, 0.0]), 0.2,
                         g=g)
    assert res.status == "clamped"
    assert res.tag is BoundaryTag.DIRICHLET
    assert res.value == pytest.approx([0.0, 0.0], abs=0.0)
    assert res.point[0] == pytest.approx(0.0, abs=1e-12)


def test_eval_at_upwind_clamps_to_field_on_outflow():
    mesh = generate_rect_mesh(
        (0.0, 1.0), (0.0, 1.0), 4,
        tag_rule=lambda mid: BoundaryTag.STRESS_FREE if mid[0] >= 1 - 1e-9
        else BoundaryTag.DIRICHLET)
    space = velocity_space(mesh)
    f = interpolate(space, lambda p: np.column_stack(
        [p[:, 0], np.zeros(len(p))]))
    # a foot that backtracks out through the right (outflow) edge
    res = eval_at_upwind(f, np.array([0.95, 0.5]), np.array([-1.0, 0.0]), 0.2,
                         g=lambda pts: np.full((len(pts), 2), 9.0))
    assert res.status == "clamped"
    assert res.tag is BoundaryTag.STRESS_FREE
    assert res.value == pytest.approx([1.0, 0.0], abs=1e-12)


def test_clamped_points_stay_in_domain(unit_mesh, rng):
    space = velocity_space(unit_mesh)
    f = constant_field(space, (0.0, 0.0))
    for _ in range(30):
        x = rng.uniform(0.05, 0.95, 2)
        v = rng.normal(0, 1, 2) * 20.0
        res = eval_at_upwind(f, x, v, 0.5, g=lambda pts: np.zeros((len(pts), 2)))
        assert locate_point(unit_mesh, res.point) is not None


def test_ab2_constant_history_fixed_point(unit_mesh):
    phi_bar = 0.7
    phi = builtin_porosity("constant", value=phi_bar)
    space = velocity_space(unit_mesh)
    c = np.array([0.4, -0.1])
    u = constant_field(space, phi_bar * c)  # the average velocity is c
    x = np.array([0.43, 0.57])
    val = ab2_material_term(u, u, phi, 0.1, x)
    assert val == pytest.approx(3.0 * phi_bar * c, abs=1e-12)
    # the full bracket (3 u - val) vanishes at the uniform steady state
    assert 3.0 * phi_bar * c - val == pytest.approx([0, 0], abs=1e-12)


def test_ab2_equal_history_advects_with_itself(unit_mesh):
    # with equal history fields the extrapolation collapses to that field
    phi = builtin_porosity("constant", value=1.0)
    space = velocity_space(unit_mesh)
    f = interpolate(space, lambda p: np.column_stack(
        [0.1 + 0.2 * p[:, 1], np.zeros(len(p))]))
    x = np.array([0.5, 0.5])
    val = ab2_material_term(f, f, phi, 0.05, x)
    w_here = np.array([0.1 + 0.2 * 0.5, 0.0])
    foot1 = x - 0.05 * w_here
    foot2 = x - 0.10 * w_here
    expected = 4 * np.array([0.1 + 0.2 * foot1[1], 0.0]) \
        - np.array([0.1 + 0.2 * foot2[1], 0.0])
    assert val == pytest.approx(expected, abs=1e-12)


def test_ab2_linear_in_time_exact(unit_mesh):
    # u(t) = t*c with unit porosity: the discrete material derivative is c
    phi = builtin_porosity("constant", value=1.0)
    space = velocity_space(unit_mesh)
    c = np.array([0.3, 0.2])
    tau, k = 0.1, 5
    u_prev = constant_field(space, (k - 1) * tau * c)
    u_prev2 = constant_field(space, (k - 2) * tau * c)
    x = np.array([0.61, 0.37])
    bracket = ab2_material_term(u_prev, u_prev2, phi, tau, x)
    u_now = k * tau * c
    derivative = (3.0 * u_now - bracket) / (2.0 * tau)
    assert derivative == pytest.approx(c, abs=1e-12)


def test_ab2_batched_matches_scalar(unit_mesh, rng):
    phi = builtin_porosity("constant", value=0.8)
    space = velocity_space(unit_mesh)
    u1 = interpolate(space, lambda p: np.column_stack(
        [np.sin(p[:, 1]), np.cos(p[:, 0])]) * 0.3)
    u2 = interpolate(space, lambda p: np.column_stack(
        [np.cos(p[:, 1]), np.sin(p[:, 0])]) * 0.3)
    pts = rng.uniform(0.2, 0.8, (20, 2))
    batched, _ = ab2_material_terms(u1, u2, phi, 0.05, pts)
    for i in range(len(pts)):
        single = ab2_material_term(u1, u2, phi, 0.05, pts[i])
        assert batched[i] == pytest.approx(single, abs=1e-14)


def test_lg1_zero_field(unit_mesh):
    phi = builtin_porosity("constant", value=0.6)
    space = velocity_space(unit_mesh)
    u0 = constant_field(space, (0.0, 0.0))
    val = lg1_material_term(u0, phi, 0.1, np.array([0.5, 0.5]))
    assert val == pytest.approx([0, 0], abs=0.0)


def test_lg1_uniform_field(unit_mesh):
    phi_bar = 0.5
    phi = builtin_porosity("constant", value=phi_bar)
    space = velocity_space(unit_mesh)
    c = np.array([0.2, 0.1])
    u0 = constant_field(space, phi_bar * c)
    val = lg1_material_term(u0, phi, 0.1, np.array([0.5, 0.5]),
                            g0=lambda pts: np.broadcast_to(
                                phi_bar * c, (len(pts), 2)).copy())
    assert val == pytest.approx(phi_bar * c, abs=1e-13)


def test_lg1_small_tau_limit(unit_mesh):
    phi = builtin_porosity("mms-sine")
    space = velocity_space(unit_mesh)
    u0 = interpolate(space, lambda p: np.column_stack(
        [p[:, 1] ** 2, p[:, 0]]) * 0.2)
    x = np.array([0.4, 0.6])
    val = lg1_material_term(u0, phi, 1e-9, x)
    phi_x = phi.value(x[None])[0]
    w0_x = np.array([0.2 * 0.36, 0.2 * 0.4]) / phi_x
    assert val == pytest.approx(phi_x * w0_x, abs=1e-8)


def test_batched_requires_interior_points(unit_mesh):
    phi = builtin_porosity("constant", value=1.0)
    space = velocity_space(unit_mesh)
    u = constant_field(space, (1.0, 0.0))
    with pytest.raises(ValueError):
        lg1_material_terms(u, phi, 0.1, np.array([[2.0, 0.5]]))


def test_ab2_exact_for_space_linear_time_linear_field(unit_mesh):
    # w(x, t) = t (c + B x) with unit porosity: linear in space (exact in P2)
    # and linear in time, so the discrete material derivative reproduces
    # dw/dt + (w . grad) w = (c + B x) + t^2 B (c + B x) exactly
    phi = builtin_porosity("constant", value=1.0)
    space = velocity_space(unit_mesh)
    c = np.array([0.05, -0.02])
    b_mat = np.array([[0.04, -0.03], [0.02, 0.05]])

    def w_at(pts, t):
        return t * (c[None, :] + pts @ b_mat.T)

    tau, k = 0.05, 4
    u_prev = interpolate(space, lambda p: w_at(p, (k - 1) * tau))
    u_prev2 = interpolate(space, lambda p: w_at(p, (k - 2) * tau))
    for x in (np.array([0.31, 0.57]), np.array([0.72, 0.44])):
        bracket = ab2_material_term(u_prev, u_prev2, phi, tau, x)
        t_k = k * tau
        deriv = (3.0 * w_at(x[None], t_k)[0] - bracket) / (2.0 * tau)
        exact = (c + b_mat @ x) + t_k ** 2 * (b_mat @ (c + b_mat @ x))
        assert deriv == pytest.approx(exact, abs=1e-13)
