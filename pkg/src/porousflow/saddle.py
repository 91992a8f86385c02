"""Constrained saddle-point systems for one time step.

A system couples the velocity block (mass + viscous + drag contributions)
with the divergence constraint.  Dirichlet values are imposed by symmetric
row/column elimination with right-hand-side lifting, slip walls constrain the
normal velocity component on axis-aligned edges, and the pressure level on a
fully Dirichlet boundary is fixed through a single zero-mean Lagrange
multiplier.  Systems are solved by a sparse direct factorization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import splu

from porousflow.assembly import FormContext, pressure_volume_vector
from porousflow.fem import FeField, boundary_nodes
from porousflow.mesh import BoundaryTag


class SolverError(RuntimeError):
    """Base class for failures while solving a step system."""


class SingularSystemError(SolverError):
    """The constrained system is (numerically) singular."""


class ConstraintConflictError(ValueError):
    """A degree of freedom was constrained twice with different values."""


class UnsupportedBoundaryError(ValueError):
    """A boundary configuration outside the supported set was requested."""


class GaugeError(ValueError):
    """The zero-mean pressure gauge was requested where it does not apply."""


@dataclass
class SolveReport:
    """Algebraic quality measures of one solve."""

    algebraic_residual: float
    incompressibility_residual: float
    n_constrained: int
    gauge_multiplier: float | None = None
    n_clamped_feet: int = 0


class SaddleSystem:
    """One velocity/pressure system with constraint bookkeeping."""

    def __init__(self, ctx: FormContext, a_block: sparse.spmatrix,
                 b_block: sparse.spmatrix, rhs_velocity: np.ndarray,
                 rhs_pressure: np.ndarray | None = None):
        self.ctx = ctx
        self.A = a_block.tocsr()
        self.B = b_block.tocsr()
        nv = ctx.vspace.dof_count
        nq = ctx.pspace.dof_count
        if self.A.shape != (nv, nv) or self.B.shape != (nq, nv):
            raise ValueError("block shapes do not match the context spaces")
        self.rhs_v = np.asarray(rhs_velocity, dtype=float).copy()
        self.rhs_p = (np.zeros(nq) if rhs_pressure is None
                      else np.asarray(rhs_pressure, dtype=float).copy())
        self.dirichlet_map: dict[int, float] = {}
        self.gauge = False

    # -- constraints ------------------------------------------------------------

    def _constrain(self, dof: int, value: float) -> None:
        old = self.dirichlet_map.get(dof)
        if old is not None and abs(old - value) > 1e-12 * max(1.0, abs(old)):
            raise ConstraintConflictError(
                f"velocity dof {dof} constrained to both {old!r} and {value!r}")
        self.dirichlet_map[dof] = value

    def apply_dirichlet(self, g, t: float | None = None,
                        tags=(BoundaryTag.DIRICHLET,)) -> "SaddleSystem":
        """Prescribe both velocity components on the tagged boundary nodes.

        ``g(points [, t])`` returns ``(n, 2)`` nodal values at the vertices
        and edge midpoints of the tagged edges.
        """
        nodes = boundary_nodes(self.ctx.vspace, set(tags))
        if nodes.size == 0:
            return self
        pts = self.ctx.vspace.node_coords[nodes]
        vals = np.asarray(g(pts) if t is None else g(pts, t), dtype=float)
        for node, val in zip(nodes, vals):
            self._constrain(2 * int(node), float(val[0]))
            self._constrain(2 * int(node) + 1, float(val[1]))
        return self

    def apply_slip(self) -> "SaddleSystem":
        """Zero the normal velocity component on axis-aligned slip edges."""
        mesh = self.ctx.mesh
        for e in mesh.boundary_edges_by_tag(BoundaryTag.SLIP):
            a, b = mesh.boundary_edges[e]
            d = mesh.vertices[b] - mesh.vertices[a]
            if abs(d[1]) <= 1e-12 * max(1.0, abs(d[0])):
                comp = 1   # horizontal edge, normal along y
            elif abs(d[0]) <= 1e-12 * max(1.0, abs(d[1])):
                comp = 0   # vertical edge, normal along x
            else:
                raise UnsupportedBoundaryError(
                    "slip boundaries must be axis-aligned")
            key = tuple(sorted((int(a), int(b))))
            for node in (int(a), int(b), self.ctx.vspace.edge_nodes[key]):
                self._constrain(2 * node + comp, 0.0)
        return self

    def apply_gauge(self) -> "SaddleSystem":
        """Constrain the pressure to zero mean via one Lagrange multiplier."""
        if len(self.ctx.mesh.boundary_edges_by_tag(BoundaryTag.STRESS_FREE)):
            raise GaugeError("pressure gauge conflicts with a stress-free "
                             "boundary, which already fixes the level")
        self.gauge = True
        return self

    # -- solve --------------------------------------------------------------------

    def solve(self):
        """Factorize and solve; returns velocity field, pressure field, report."""
        nv = self.ctx.vspace.dof_count
        nq = self.ctx.pspace.dof_count
        if self.gauge:
            c = pressure_volume_vector(self.ctx)
            cc = sparse.csr_matrix(c[:, None])
            k = sparse.bmat([[self.A, self.B.T, None],
                             [self.B, None, cc],
                             [None, cc.T, None]], format="csr")
            rhs = np.concatenate([self.rhs_v, self.rhs_p, [0.0]])
        else:
            k = sparse.bmat([[self.A, self.B.T],
                             [self.B, None]], format="csr")
            rhs = np.concatenate([self.rhs_v, self.rhs_p])
        if not np.all(np.isfinite(rhs)):
            raise SolverError("right-hand side contains NaN or Inf")

        n = k.shape[0]
        fixed = np.fromiter(self.dirichlet_map.keys(), dtype=np.int64,
                            count=len(self.dirichlet_map))
        values = np.fromiter(self.dirichlet_map.values(), dtype=float,
                             count=len(self.dirichlet_map))
        if fixed.size:
            order = np.argsort(fixed)
            fixed, values = fixed[order], values[order]
            lift = np.zeros(n)
            lift[fixed] = values
            rhs = rhs - k @ lift
            keep = np.ones(n)
            keep[fixed] = 0.0
            mask = sparse.diags(keep)
            mark = np.zeros(n)
            mark[fixed] = 1.0
            k = (mask @ k @ mask + sparse.diags(mark)).tocsr()
            rhs[fixed] = values

        try:
            lu = splu(k.tocsc())
            x = lu.solve(rhs)
        except RuntimeError as exc:
            raise SingularSystemError(str(exc)) from exc
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("solution contains NaN or Inf")
        resid = float(np.linalg.norm(k @ x - rhs)
                      / max(np.linalg.norm(rhs), 1e-30))
        if resid > 1e-6:
            raise SingularSystemError(
                f"direct solve left a relative residual of {resid:.3e}")
        if fixed.size:
            x[fixed] = values  # prescribed values, exactly

        u = x[:nv]
        p = x[nv:nv + nq]
        lam = float(x[-1]) if self.gauge else None
        if self.gauge:
            c = pressure_volume_vector(self.ctx)
            p = p - (c @ p) / float(self.ctx.mesh.areas.sum())
        div_res = float(np.abs(self.B @ u).max()) if nq else 0.0
        report = SolveReport(algebraic_residual=resid,
                             incompressibility_residual=div_res,
                             n_constrained=int(fixed.size),
                             gauge_multiplier=lam)
        u_field = FeField(self.ctx.vspace, u)
        p_field = FeField(self.ctx.pspace, p)
        return u_field, p_field, report
