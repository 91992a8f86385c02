"""Legacy ASCII VTK output and per-run CSV series.

Snapshots carry the velocity vector, its magnitude, the pressure, and the
porosity as vertex point data on the linear triangulation.  Output is fully
deterministic for a given configuration: fixed float formatting, no
timestamps.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from porousflow.fem import FeField
from porousflow.mesh import Mesh
from porousflow.porous import PorosityField

_FMT = "{:.16e}"


def _write_header(fh, title: str, mesh: Mesh) -> None:
    fh.write("# vtk DataFile Version 3.0\n")
    fh.write(f"{title}\n")
    fh.write("ASCII\n")
    fh.write("DATASET UNSTRUCTURED_GRID\n")
    fh.write(f"POINTS {mesh.n_vertices} double\n")
    for x, y in mesh.vertices:
        fh.write(f"{_FMT.format(x)} {_FMT.format(y)} 0.0\n")
    fh.write(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}\n")
    for a, b, c in mesh.triangles:
        fh.write(f"3 {a} {b} {c}\n")
    fh.write(f"CELL_TYPES {mesh.n_triangles}\n")
    fh.writelines("5\n" for _ in range(mesh.n_triangles))


def write_mesh(mesh: Mesh, path) -> Path:
    """Mesh-only export for inspection."""
    path = Path(path)
    with open(path, "w") as fh:
        _write_header(fh, "triangulation", mesh)
        fh.write(f"CELL_DATA {mesh.n_triangles}\n")
        fh.write("SCALARS area double 1\nLOOKUP_TABLE default\n")
        for a in mesh.areas:
            fh.write(f"{_FMT.format(a)}\n")
    return path


def write_snapshot(u_field: FeField, p_field: FeField,
                   porosity: PorosityField, mesh: Mesh, t: float,
                   path) -> Path:
    """One flow snapshot with vertex point data."""
    path = Path(path)
    nv = mesh.n_vertices
    uv = u_field.node_values()[:nv]        # vertex nodes come first
    speed = np.sqrt((uv ** 2).sum(axis=1))
    press = p_field.coefficients
    phi = np.asarray(porosity.value(mesh.vertices), dtype=float)
    with open(path, "w") as fh:
        _write_header(fh, f"flow snapshot t={t:.6e}", mesh)
        fh.write(f"POINT_DATA {nv}\n")
        fh.write("VECTORS velocity double\n")
        for vx, vy in uv:
            fh.write(f"{_FMT.format(vx)} {_FMT.format(vy)} 0.0\n")
        fh.write("SCALARS velocity_magnitude double 1\nLOOKUP_TABLE default\n")
        for s in speed:
            fh.write(f"{_FMT.format(s)}\n")
        fh.write("SCALARS pressure double 1\nLOOKUP_TABLE default\n")
        for p in press:
            fh.write(f"{_FMT.format(p)}\n")
        fh.write("SCALARS porosity double 1\nLOOKUP_TABLE default\n")
        for v in phi:
            fh.write(f"{_FMT.format(v)}\n")
    return path


class SeriesWriter:
    """Accumulates the per-snapshot scalar series and writes one CSV."""

    header = ("t", "min_velocity_magnitude", "max_velocity_magnitude",
              "velocity_l2", "pressure_l2")

    def __init__(self):
        self.rows: list[tuple] = []

    def add(self, t: float, u_field: FeField, p_field: FeField,
            u_l2: float, p_l2: float) -> None:
        speed = np.sqrt((u_field.node_values() ** 2).sum(axis=1))
        self.rows.append((t, float(speed.min()), float(speed.max()),
                          u_l2, p_l2))

    def write(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header)
            for row in self.rows:
                writer.writerow([f"{v:.6e}" for v in row])
        return path


def read_point_data(path) -> dict:
    """Parse the point-data arrays back from a legacy ASCII snapshot."""
    arrays: dict[str, np.ndarray] = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    i = 0
    n_points = 0
    in_point_data = False
    while i < len(lines):
        line = lines[i]
        if line.startswith("POINTS"):
            n_points = int(line.split()[1])
            pts = [tuple(map(float, lines[i + 1 + j].split()))
                   for j in range(n_points)]
            arrays["points"] = np.array(pts)[:, :2]
            i += n_points
        elif line.startswith("POINT_DATA"):
            in_point_data = True
        elif line.startswith("CELL_DATA"):
            in_point_data = False
        elif line.startswith("VECTORS") and in_point_data:
            name = line.split()[1]
            vals = [tuple(map(float, lines[i + 1 + j].split()))
                    for j in range(n_points)]
            arrays[name] = np.array(vals)[:, :2]
            i += n_points
        elif line.startswith("SCALARS") and in_point_data:
            name = line.split()[1]
            vals = [float(lines[i + 2 + j]) for j in range(n_points)]
            arrays[name] = np.array(vals)
            i += n_points + 1
        i += 1
    return arrays
