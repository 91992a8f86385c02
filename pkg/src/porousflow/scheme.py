"""Time integration: a first-order start-up step followed by two-step,
second-order general steps along the characteristics of the average velocity.

Every step solves one linear saddle-point system: the transport term enters
through the composed upwind values of the two previous velocities, and the
quadratic drag is linearized around the extrapolated velocity magnitude, so
no step requires a nonlinear iteration.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from porousflow.assembly import (
    FormContext,
    assemble_a0,
    assemble_b,
    assemble_c0,
    assemble_c1,
    assemble_load,
    assemble_mass_phi_rhs,
)
from porousflow.characteristics import ab2_material_terms, lg1_material_terms
from porousflow.fem import FeField, interpolate, norm
from porousflow.mesh import BoundaryTag
from porousflow.saddle import SaddleSystem, SolveReport


class SchemeDivergenceError(RuntimeError):
    """A step produced no usable solution; carries the failing step index."""

    def __init__(self, step: int, message: str, partial=None):
        super().__init__(f"step {step}: {message}")
        self.step = step
        self.partial = partial


@dataclass
class ProblemSetup:
    """Everything one run needs besides the time-step history.

    ``u_initial(points)`` gives the initial velocity; ``dirichlet(points, t)``
    the boundary velocity on Dirichlet edges; ``forcing(points, t)`` the body
    force (or ``None``).  With ``gauge=None`` the zero-mean pressure gauge is
    enabled exactly when the whole boundary is Dirichlet.
    """

    ctx: FormContext
    u_initial: Callable
    dirichlet: Callable | None
    tau: float
    t_final: float
    forcing: Callable | None = None
    gauge: bool | None = None
    _blocks: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.tau <= 0.0 or self.t_final <= 0.0:
            raise ValueError("tau and t_final must be positive")
        tags = set(self.ctx.mesh.boundary_tags)
        if self.gauge is None:
            self.gauge = tags == {BoundaryTag.DIRICHLET}
        if BoundaryTag.DIRICHLET not in tags and not self.gauge:
            raise ValueError("a Dirichlet part of the boundary is required")
        if BoundaryTag.DIRICHLET in tags and self.dirichlet is None:
            raise ValueError("dirichlet data is required on tagged edges")

    @property
    def n_steps(self) -> int:
        return int(np.floor(self.t_final / self.tau + 1e-9))

    def constant_blocks(self):
        if not self._blocks:
            self._blocks["a0"] = assemble_a0(self.ctx)
            self._blocks["c0"] = assemble_c0(self.ctx)
            self._blocks["b"] = assemble_b(self.ctx)
        return self._blocks["a0"], self._blocks["c0"], self._blocks["b"]


@dataclass
class SchemeState:
    """Rolling two-step history; ``k`` is the next step to compute."""

    u_prev: FeField
    p_prev: FeField | None
    k: int
    tau: float
    t_final: float
    u_prev2: FeField | None = None

    def __post_init__(self):
        if self.k >= 2 and self.u_prev2 is None:
            raise ValueError("steps beyond the first need two history fields")


class StepResult(NamedTuple):
    u: FeField
    p: FeField
    report: SolveReport


def _bound_dirichlet(setup: ProblemSetup, t: float):
    if setup.dirichlet is None:
        return None
    return lambda pts: setup.dirichlet(pts, t)


def _solve_step(setup: ProblemSetup, a_total, rhs_v, t: float) -> StepResult:
    _, _, b = setup.constant_blocks()
    system = SaddleSystem(setup.ctx, a_total, b, rhs_v)
    if setup.dirichlet is not None:
        system.apply_dirichlet(setup.dirichlet, t)
    system.apply_slip()
    if setup.gauge:
        system.apply_gauge()
    u, p, report = system.solve()
    u.time_label = t
    p.time_label = t
    return StepResult(u, p, report)


def initial_step(setup: ProblemSetup, u0_field: FeField) -> StepResult:
    """First-order start-up step producing the fields at t = tau."""
    if setup.n_steps < 1:
        raise ValueError("tau exceeds the final time; no steps to take")
    ctx, tau = setup.ctx, setup.tau
    a0, c0, _ = setup.constant_blocks()
    u0_at = ctx.velocity_at_quad(u0_field).reshape(-1, 2)
    clamp_counter = [0]

    def bracket(points, hints):
        val, clamped = lg1_material_terms(u0_field, ctx.porosity, tau, points,
                                          hints, u0_at=u0_at,
                                          g0=_bound_dirichlet(setup, 0.0))
        clamp_counter[0] += clamped
        return val

    rhs, mass_scaled = assemble_mass_phi_rhs(bracket, ctx, tau, "initial")
    if setup.forcing is not None:
        rhs = rhs + assemble_load(setup.forcing, ctx, tau)
    a_total = mass_scaled + a0 + c0 + assemble_c1(u0_field, ctx)
    result = _solve_step(setup, a_total, rhs, tau)
    result.report.n_clamped_feet = clamp_counter[0]
    return result


def general_step(setup: ProblemSetup, state: SchemeState) -> StepResult:
    """Second-order step k >= 2 from the two stored history fields."""
    if state.k < 2:
        raise ValueError("general steps start at k = 2")
    ctx, tau = setup.ctx, setup.tau
    t_k = state.k * tau
    a0, c0, _ = setup.constant_blocks()
    u1_at = ctx.velocity_at_quad(state.u_prev).reshape(-1, 2)
    u2_at = ctx.velocity_at_quad(state.u_prev2).reshape(-1, 2)
    clamp_counter = [0]

    def bracket(points, hints):
        val, clamped = ab2_material_terms(
            state.u_prev, state.u_prev2, ctx.porosity, tau, points, hints,
            u_prev_at=u1_at, u_prev2_at=u2_at,
            g_prev=_bound_dirichlet(setup, t_k - tau),
            g_prev2=_bound_dirichlet(setup, t_k - 2.0 * tau))
        clamp_counter[0] += clamped
        return val

    rhs, mass_scaled = assemble_mass_phi_rhs(bracket, ctx, tau, "general")
    if setup.forcing is not None:
        rhs = rhs + assemble_load(setup.forcing, ctx, t_k)
    theta = FeField(ctx.vspace,
                    2.0 * state.u_prev.coefficients - state.u_prev2.coefficients)
    a_total = mass_scaled + a0 + c0 + assemble_c1(theta, ctx)
    result = _solve_step(setup, a_total, rhs, t_k)
    result.report.n_clamped_feet = clamp_counter[0]
    return result


@dataclass
class RunSummary:
    """Per-step diagnostics of a completed (or aborted) run."""

    steps: list
    n_steps: int
    wall_time: float
    u_final: FeField | None = None
    p_final: FeField | None = None


Observer = Callable[[int, float, FeField, FeField, dict], None]


def run(setup: ProblemSetup, observers: Sequence[Observer] = ()) -> RunSummary:
    """Execute the start-up step and all general steps up to the final time.

    Observers are called after every accepted step with ``(k, t, velocity,
    pressure, diagnostics)``.  A failed step raises
    :class:`SchemeDivergenceError` with the partial summary attached.
    """
    n_steps = setup.n_steps
    if n_steps < 1:
        raise ValueError("tau exceeds the final time; no steps to take")
    t0 = time.perf_counter()
    u0_field = interpolate(setup.ctx.vspace, setup.u_initial, None)
    u0_field.time_label = 0.0
    records: list[dict] = []
    summary = RunSummary(records, n_steps, 0.0)

    state = SchemeState(u_prev=u0_field, p_prev=None, k=1,
                        tau=setup.tau, t_final=setup.t_final)
    for k in range(1, n_steps + 1):
        try:
            if k == 1:
                result = initial_step(setup, u0_field)
            else:
                result = general_step(setup, state)
        except Exception as exc:
            summary.wall_time = time.perf_counter() - t0
            raise SchemeDivergenceError(k, str(exc), summary) from exc
        t_k = k * setup.tau
        diag = {
            "step": k,
            "t": t_k,
            "velocity_l2": norm(result.u, "L2"),
            "pressure_l2": norm(result.p, "L2"),
            "incompressibility_residual":
                result.report.incompressibility_residual,
            "algebraic_residual": result.report.algebraic_residual,
            "clamped_feet": result.report.n_clamped_feet,
        }
        records.append(diag)
        for obs in observers:
            obs(k, t_k, result.u, result.p, diag)
        state = SchemeState(u_prev=result.u, p_prev=result.p, k=k + 1,
                            tau=setup.tau, t_final=setup.t_final,
                            u_prev2=state.u_prev)
    summary.wall_time = time.perf_counter() - t0
    summary.u_final = state.u_prev
    summary.p_final = state.p_prev
    return summary
