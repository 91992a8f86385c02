"""Triangulations of axis-aligned rectangles with tagged boundaries.

Meshes are structured crossed-triangle grids: every grid cell is split into
two triangles with the diagonal alternating from cell to cell.  The layout is
fully deterministic, which keeps convergence runs reproducible.  An optional
``LayerGrading`` concentrates the horizontal mesh lines around a given
``y``-line, e.g. to resolve a thin porosity transition layer.

Point location uses a walking search through the triangle adjacency with an
exhaustive scan as fallback; on the convex domains built here, a walk that
crosses a boundary edge proves the query point lies outside.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple

import numpy as np

#: Barycentric slack used to decide containment.
INSIDE_TOL = 1e-12


class BoundaryTag(Enum):
    """Physical role of a boundary edge."""

    DIRICHLET = 0    # prescribed velocity
    STRESS_FREE = 1  # zero normal stress (typically an outflow)
    SLIP = 2         # zero normal velocity, stress-free tangentially


TagRule = Callable[[np.ndarray], BoundaryTag]


class PointLocation(NamedTuple):
    """A triangle index together with barycentric coordinates in it."""

    triangle: int
    bary: np.ndarray


class BoundaryHit(NamedTuple):
    """First intersection of a segment with the boundary."""

    point: np.ndarray
    tag: BoundaryTag
    edge: int


@dataclass(frozen=True)
class LayerGrading:
    """Refine the horizontal mesh lines around ``line`` down to ``size``.

    ``line`` must lie strictly inside the vertical extent.  Element heights
    grow geometrically away from the layer so that the total node count is
    unchanged.
    """

    line: float
    size: float


class Mesh:
    """Conforming triangulation of a rectangle.

    Parameters
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise vertex triples
    boundary_edges : (nbe, 2) int array, oriented as they appear in their
        owning triangle (so the outward normal is the edge direction rotated
        clockwise by 90 degrees)
    boundary_tags : sequence of ``BoundaryTag``, one per boundary edge
    boundary_edge_tri : (nbe,) int array, owning triangle of each edge
    """

    def __init__(self, vertices, triangles, boundary_edges, boundary_tags,
                 boundary_edge_tri):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.boundary_edges = np.ascontiguousarray(boundary_edges, dtype=np.int64)
        self.boundary_tags = list(boundary_tags)
        self.boundary_edge_tri = np.ascontiguousarray(boundary_edge_tri, dtype=np.int64)
        if len(self.boundary_tags) != len(self.boundary_edges):
            raise ValueError("one tag per boundary edge required")
        self._build_geometry()
        self._build_adjacency()

    # -- construction helpers -------------------------------------------------

    def _build_geometry(self):
        p = self.vertices[self.triangles]            # (nt, 3, 2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(det <= 0.0):
            raise ValueError("all triangles must be counterclockwise with "
                             "positive area")
        self.areas = 0.5 * det
        inv = np.empty((len(det), 2, 2))
        inv[:, 0, 0] = d2[:, 1]
        inv[:, 0, 1] = -d2[:, 0]
        inv[:, 1, 0] = -d1[:, 1]
        inv[:, 1, 1] = d1[:, 0]
        inv /= det[:, None, None]
        # (lam1, lam2) = _inv_b @ (x - p0)
        self._inv_b = inv
        # gradients of the three barycentric coordinates, (nt, 3, 2)
        grads = np.empty((len(det), 3, 2))
        grads[:, 1] = inv[:, 0]
        grads[:, 2] = inv[:, 1]
        grads[:, 0] = -inv[:, 0] - inv[:, 1]
        self.grad_lambda = grads
        edges = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        self.h_max = float(np.sqrt((edges ** 2).sum(-1)).max())

    def _build_adjacency(self):
        nt = self.n_triangles
        owner: dict[tuple[int, int], tuple[int, int]] = {}
        neighbors = np.full((nt, 3), -1, dtype=np.int64)
        for t in range(nt):
            v = self.triangles[t]
            for k in range(3):
                key = tuple(sorted((int(v[(k + 1) % 3]), int(v[(k + 2) % 3]))))
                if key in owner:
                    s, j = owner.pop(key)
                    neighbors[t, k] = s
                    neighbors[s, j] = t
                else:
                    owner[key] = (t, k)
        self.triangle_neighbors = neighbors
        vertex_tris: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for t in range(nt):
            for v in self.triangles[t]:
                vertex_tris[int(v)].append(t)
        self._vertex_tris = [np.array(lst, dtype=np.int64) for lst in vertex_tris]

    # -- basic queries ---------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def total_area(self) -> float:
        return float(self.areas.sum())

    def vertex_triangles(self, v: int) -> np.ndarray:
        """Indices of the triangles incident to vertex ``v``."""
        return self._vertex_tris[v]

    def boundary_edges_by_tag(self, tag: BoundaryTag) -> np.ndarray:
        return np.array([i for i, t in enumerate(self.boundary_tags) if t is tag],
                        dtype=np.int64)

    def barycentric(self, tris, pts) -> np.ndarray:
        """Barycentric coordinates of ``pts`` (m, 2) in triangles ``tris`` (m,)."""
        tris = np.asarray(tris, dtype=np.int64)
        pts = np.asarray(pts, dtype=float)
        p0 = self.vertices[self.triangles[tris, 0]]
        lam = np.einsum("mij,mj->mi", self._inv_b[tris], pts - p0)
        return np.column_stack([1.0 - lam[:, 0] - lam[:, 1], lam])


def _graded_interval(length: float, n: int, first: float) -> np.ndarray:
    """Sizes of ``n`` sub-intervals filling ``length``, growing geometrically
    from ``first`` outward.  Returns the sizes starting at the refined end."""
    if first * n >= length:
        return np.full(n, length / n)

    def fill(r: float) -> float:
        return first * (r ** n - 1.0) / (r - 1.0)

    lo, hi = 1.0 + 1e-12, 2.0
    while fill(hi) < length:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fill(mid) < length:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    sizes = first * r ** np.arange(n)
    return sizes * (length / sizes.sum())


def _graded_nodes(y0: float, y1: float, ny: int, grading: LayerGrading) -> np.ndarray:
    if not (y0 < grading.line < y1):
        raise ValueError("grading line must lie inside the vertical extent")
    frac = (grading.line - y0) / (y1 - y0)
    n_lo = min(max(1, round(ny * frac)), ny - 1)
    n_hi = ny - n_lo
    lo = _graded_interval(grading.line - y0, n_lo, grading.size)
    hi = _graded_interval(y1 - grading.line, n_hi, grading.size)
    below = grading.line - np.concatenate([[0.0], np.cumsum(lo)])
    above = grading.line + np.cumsum(hi)
    ys = np.concatenate([below[::-1], above])
    ys[0], ys[-1] = y0, y1
    return ys


def generate_rect_mesh(x_extent, y_extent, n_divisions: int,
                       grading: LayerGrading | None = None,
                       tag_rule: TagRule | None = None) -> Mesh:
    """Structured crossed-triangle mesh of ``x_extent`` x ``y_extent``.

    ``n_divisions`` counts cells along x; the y-division is chosen so cells
    are close to square.  Boundary edges are tagged by calling ``tag_rule``
    on each edge midpoint (default: everything ``DIRICHLET``).
    """
    x0, x1 = (float(v) for v in x_extent)
    y0, y1 = (float(v) for v in y_extent)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("degenerate extent")
    if n_divisions < 2:
        raise ValueError("n_divisions must be at least 2")
    nx = int(n_divisions)
    ny = max(2, round(nx * (y1 - y0) / (x1 - x0)))
    xs = np.linspace(x0, x1, nx + 1)
    if grading is None:
        ys = np.linspace(y0, y1, ny + 1)
    else:
        ys = _graded_nodes(y0, y1, ny, grading)

    xv, yv = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([xv.ravel(), yv.ravel()])

    def vid(i: int, j: int) -> int:
        return j * (nx + 1) + i

    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    k = 0
    for j in range(ny):
        for i in range(nx):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                tris[k] = (a, b, c)
                tris[k + 1] = (a, c, d)
            else:
                tris[k] = (a, b, d)
                tris[k + 1] = (b, c, d)
            k += 2

    # boundary edges, oriented counterclockwise around the rectangle in the
    # order they appear in their owning triangle
    edge_owner: dict[tuple[int, int], int] = {}
    for t in range(len(tris)):
        v = tris[t]
        for kk in range(3):
            key = tuple(sorted((int(v[(kk + 1) % 3]), int(v[(kk + 2) % 3]))))
            edge_owner[key] = t if key not in edge_owner else -1
    b_edges = []
    b_tris = []
    for t in range(len(tris)):
        v = tris[t]
        for kk in range(3):
            a, b = int(v[(kk + 1) % 3]), int(v[(kk + 2) % 3])
            if edge_owner[tuple(sorted((a, b)))] == t:
                b_edges.append((a, b))
                b_tris.append(t)
    b_edges = np.array(b_edges, dtype=np.int64)
    b_tris = np.array(b_tris, dtype=np.int64)

    rule = tag_rule or (lambda mid: BoundaryTag.DIRICHLET)
    mids = 0.5 * (vertices[b_edges[:, 0]] + vertices[b_edges[:, 1]])
    tags = [rule(m) for m in mids]
    return Mesh(vertices, tris, b_edges, tags, b_tris)


# -- point location -----------------------------------------------------------

def locate_many(mesh: Mesh, pts: np.ndarray, hints: np.ndarray | None = None):
    """Locate many points by walking from per-point hint triangles.

    Returns ``(tri, bary, inside)`` where ``tri`` is -1 for points outside the
    closed domain.  Points that exhaust the walk budget (degenerate cycling)
    fall back to an exhaustive scan.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = len(pts)
    if hints is None:
        cur = np.zeros(n, dtype=np.int64)
    else:
        cur = np.clip(np.asarray(hints, dtype=np.int64).copy(), 0,
                      mesh.n_triangles - 1)
    tri_out = np.full(n, -1, dtype=np.int64)
    bary_out = np.zeros((n, 3))
    inside = np.zeros(n, dtype=bool)

    pending = np.arange(n)
    max_steps = 4 * int(np.sqrt(mesh.n_triangles)) + 64
    for _ in range(max_steps):
        if pending.size == 0:
            break
        b = mesh.barycentric(cur[pending], pts[pending])
        amin = np.argmin(b, axis=1)
        bmin = b[np.arange(len(b)), amin]
        ok = bmin >= -INSIDE_TOL
        done = pending[ok]
        tri_out[done] = cur[done]
        bary_out[done] = b[ok]
        inside[done] = True
        rest = pending[~ok]
        if rest.size == 0:
            pending = rest
            break
        nb = mesh.triangle_neighbors[cur[rest], amin[~ok]]
        # crossing a boundary edge outward on a convex domain: point outside
        cont = rest[nb >= 0]
        cur[cont] = nb[nb >= 0]
        pending = cont

    # walk budget exhausted (degenerate cycling): exhaustive fallback
    for i in pending:
        hit = _locate_exhaustive(mesh, pts[i])
        if hit is not None:
            tri_out[i], bary_out[i] = hit
            inside[i] = True
    return tri_out, bary_out, inside


def _locate_exhaustive(mesh: Mesh, x: np.ndarray):
    """Scan all triangles; lowest containing index wins."""
    all_tris = np.arange(mesh.n_triangles)
    b = mesh.barycentric(all_tris, np.broadcast_to(x, (mesh.n_triangles, 2)))
    ok = np.flatnonzero(b.min(axis=1) >= -INSIDE_TOL)
    if ok.size == 0:
        return None
    return int(ok[0]), b[ok[0]]


def locate_point(mesh: Mesh, x, hint: int | None = None) -> PointLocation | None:
    """Containing triangle and barycentric coordinates of ``x``.

    Returns ``None`` when ``x`` lies outside the closed domain.  Points on a
    shared edge or vertex resolve to the lowest incident triangle index.
    """
    x = np.asarray(x, dtype=float)
    hints = None if hint is None else np.array([hint], dtype=np.int64)
    tri, bary, inside = locate_many(mesh, x[None, :], hints)
    if not inside[0]:
        return None
    t, b = int(tri[0]), bary[0]
    on = b <= INSIDE_TOL
    if not on.any():
        return PointLocation(t, b)
    candidates = {t}
    if on.sum() >= 2:  # at a vertex: check every incident triangle
        v = int(mesh.triangles[t, int(np.argmax(b))])
        candidates.update(int(c) for c in mesh.vertex_triangles(v))
    else:  # on an edge: the neighbor across it is the only other candidate
        nb = int(mesh.triangle_neighbors[t, int(np.flatnonzero(on)[0])])
        if nb >= 0:
            candidates.add(nb)
    for c in sorted(candidates):
        bb = mesh.barycentric(np.array([c]), x[None, :])[0]
        if bb.min() >= -INSIDE_TOL:
            return PointLocation(c, bb)
    return PointLocation(t, b)


def boundary_exit_point(mesh: Mesh, start, end) -> BoundaryHit:
    """First intersection of the segment [start, end] with the boundary.

    ``start`` must lie inside the closed domain and ``end`` outside.  A
    numerically tangent crossing is resolved by nudging the segment parameter
    by 1e-12 toward ``start``; the returned point is snapped onto the crossed
    edge so it always lies in the closed domain.
    """
    a = np.asarray(start, dtype=float)
    b = np.asarray(end, dtype=float)
    s = b - a
    if not np.any(s != 0.0):
        raise ValueError("degenerate segment: start equals end")
    p = mesh.vertices[mesh.boundary_edges[:, 0]]
    r = mesh.vertices[mesh.boundary_edges[:, 1]] - p
    denom = s[0] * r[:, 1] - s[1] * r[:, 0]
    ap = p - a
    with np.errstate(divide="ignore", invalid="ignore"):
        t_par = (ap[:, 0] * r[:, 1] - ap[:, 1] * r[:, 0]) / denom
        u_par = (ap[:, 0] * s[1] - ap[:, 1] * s[0]) / denom
    valid = (np.abs(denom) > 0.0) & (u_par >= -1e-12) & (u_par <= 1.0 + 1e-12) \
        & (t_par >= -1e-12) & (t_par <= 1.0 + 1e-12)
    if not valid.any():
        raise ValueError("segment does not cross the boundary; is the end "
                         "point outside the domain?")
    t_all = np.where(valid, t_par, np.inf)
    e = int(np.argmin(t_all))
    t_star = max(float(t_all[e]) - 1e-12, 0.0)
    point = a + t_star * s
    # snap onto the edge
    rr = float(r[e] @ r[e])
    u = min(max(float((point - p[e]) @ r[e]) / rr, 0.0), 1.0)
    point = p[e] + u * r[e]
    return BoundaryHit(point, mesh.boundary_tags[e], e)
