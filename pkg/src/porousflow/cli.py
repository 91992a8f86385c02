"""Command-line driver: convergence study, case simulations, porosity
validation, and a quick invariant suite.

Every simulation writes its resolved configuration (flat ``key = value``
text) next to the outputs; a ``--config`` file provides defaults that
explicit flags override.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from porousflow import cases as case_lib
from porousflow.porous import validate_porosity_admissibility
from porousflow.verification import run_eoc, write_eoc_csv
from porousflow.vtkio import SeriesWriter, write_snapshot

SLOPE_BAND = (1.7, 2.6)   # expected range for refinement pairs with N >= 16


@dataclass
class RunConfig:
    """Resolved settings of one ``simulate`` run."""

    case: str
    n: int
    tau: float
    t_final: float
    mu: float
    rho: float
    d_p: float
    a: float
    b: float
    out_dir: str
    snapshot_every: int = 10
    diagnostics: bool = True

    def __post_init__(self):
        for name in ("n", "tau", "t_final", "mu", "rho", "d_p", "a", "b",
                     "snapshot_every"):
            if getattr(self, name) is not None and getattr(self, name) <= 0:
                raise ValueError(f"config field {name} must be positive")

    def to_text(self, extra: dict | None = None) -> str:
        lines = [f"{f.name} = {getattr(self, f.name)!r}"
                 if isinstance(getattr(self, f.name), str)
                 else f"{f.name} = {getattr(self, f.name)}"
                 for f in fields(self)]
        for key, value in (extra or {}).items():
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def parse_config_file(path) -> dict:
    """Flat ``key = value`` text; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value.strip("'\"")
    return out


def resolve_run_config(args) -> RunConfig:
    case = case_lib.get_case(args.case)
    file_cfg = parse_config_file(args.config) if args.config else {}

    def pick(flag_value, key, default, cast):
        if flag_value is not None:
            return cast(flag_value)
        if key in file_cfg:
            return cast(file_cfg[key])
        return default

    n = pick(args.n, "n", case.default_n, int)
    return RunConfig(
        case=case.name,
        n=n,
        tau=pick(args.tau, "tau", case.nominal_h(n), float),
        t_final=pick(args.t_final, "t_final", case.t_final, float),
        mu=pick(None, "mu", case.params.mu, float),
        rho=pick(None, "rho", case.params.rho, float),
        d_p=pick(None, "d_p", case.params.d_p, float),
        a=pick(None, "a", case.params.a, float),
        b=pick(None, "b", case.params.b, float),
        out_dir=pick(args.out_dir, "out_dir", f"out/{case.name}", str),
        snapshot_every=pick(args.snapshot_every, "snapshot_every", 10, int),
    )


def _cmd_eoc(args) -> int:
    n_list = [int(v) for v in args.n_list.split(",") if v]
    out_dir = Path(args.out_dir or "out/eoc")
    out_dir.mkdir(parents=True, exist_ok=True)
    records = run_eoc(n_list, t_final=args.t_final,
                      progress=lambda msg: print(msg, flush=True))
    csv_path = out_dir / "eoc.csv"
    write_eoc_csv(records, csv_path)
    print(f"{'N':>5} {'h':>12} {'Er1':>12} {'slope':>7} {'Er2':>12} {'slope':>7}")
    for r in records:
        s1 = "-" if r.slope1 is None else f"{r.slope1:.2f}"
        s2 = "-" if r.slope2 is None else f"{r.slope2:.2f}"
        print(f"{r.n:>5} {r.h:>12.4e} {r.er1:>12.4e} {s1:>7} "
              f"{r.er2:>12.4e} {s2:>7}")
    print("final-time relative errors (diagnostic, start-up transient "
          "excluded by construction):")
    for r in records:
        print(f"{r.n:>5} rel_H1(u)={r.final_rel1:.4e} "
              f"rel_L2(p)={r.final_rel2:.4e}")
    print(f"wrote {csv_path}")
    ok = True
    lo, hi = SLOPE_BAND
    for r in records:
        if r.n < 16 or r.slope1 is None:
            continue
        for label, slope in (("Er1", r.slope1), ("Er2", r.slope2)):
            inside = lo <= slope <= hi
            ok = ok and inside
            verdict = "PASS" if inside else "FAIL"
            print(f"slope check N={r.n} {label}: {slope:.2f} in "
                  f"[{lo}, {hi}] -> {verdict}")
    return 0 if ok else 1


def _case_extras(case) -> dict:
    extras = {
        "x_extent": f"({case.x_extent[0]}, {case.x_extent[1]})",
        "y_extent": f"({case.y_extent[0]}, {case.y_extent[1]})",
    }
    extras.update(case.constants)
    return extras


def _cmd_simulate(args) -> int:
    cfg = resolve_run_config(args)
    case = case_lib.get_case(cfg.case)
    if args.show_config:
        sys.stdout.write(cfg.to_text(_case_extras(case)))
        return 0
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(cfg.to_text(_case_extras(case)))

    report = validate_porosity_admissibility(
        case.porosity, case.params,
        (case.x_extent, case.y_extent), resolution=256)
    print(report.summary())
    if not report.passed:
        print("note: the admissibility hypothesis fails for this porosity; "
              "the stability theory does not cover this run")

    mesh, ctx, setup = case_lib.build_setup(case, cfg.n, cfg.tau, cfg.t_final)
    print(f"case {cfg.case}: N={cfg.n}, tau={cfg.tau:g}, T={cfg.t_final:g}, "
          f"{mesh.n_triangles} triangles, {setup.n_steps} steps")

    series = SeriesWriter()
    diag_path = out_dir / "diagnostics.jsonl"
    diag_fh = open(diag_path, "w") if cfg.diagnostics else None

    from porousflow.fem import interpolate, norm, zero_field
    u0 = interpolate(ctx.vspace, case.u_initial)
    p0 = zero_field(ctx.pspace, 0.0)
    write_snapshot(u0, p0, case.porosity, mesh, 0.0,
                   out_dir / f"{cfg.case}_{0:06d}.vtk")
    series.add(0.0, u0, p0, norm(u0, "L2"), 0.0)

    def observer(k, t, u_field, p_field, diag):
        if k % cfg.snapshot_every == 0:
            write_snapshot(u_field, p_field, case.porosity, mesh, t,
                           out_dir / f"{cfg.case}_{k:06d}.vtk")
            series.add(t, u_field, p_field, diag["velocity_l2"],
                       diag["pressure_l2"])
        if diag_fh is not None:
            diag_fh.write(json.dumps(diag, sort_keys=True) + "\n")

    from porousflow.scheme import SchemeDivergenceError, run
    try:
        summary = run(setup, observers=[observer])
    except SchemeDivergenceError as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 1
    finally:
        if diag_fh is not None:
            diag_fh.close()
    series.write(out_dir / "series.csv")
    print(f"finished {summary.n_steps} steps in {summary.wall_time:.1f} s; "
          f"outputs in {out_dir}")
    return 0


def _cmd_validate_porosity(args) -> int:
    case = case_lib.get_case(args.case)
    report = validate_porosity_admissibility(case.porosity, case.params,
                                  (case.x_extent, case.y_extent),
                                  resolution=args.resolution)
    print(f"case {case.name}: porosity {case.porosity.name}")
    print(report.summary())
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n")
        print(f"wrote {args.out}")
    return 0


def _cmd_check(args) -> int:
    """Quick invariant suite over the numerical kernels."""
    import porousflow.fem as fem
    from porousflow.porous import (PhysicalParams, forchheimer_coeff,
                                   linear_drag_coeff)
    from porousflow.verification import (ab2_consistency_check,
                                         build_mms_case,
                                         default_consistency_field,
                                         transport_identity_check,
                                         steady_stokes_solve)

    failures = 0

    def check(name, ok, detail=""):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        failures += 0 if ok else 1

    # quadrature exactness against factorial-form monomial integrals
    for deg in (2, 5, 9):
        rule = fem.tri_quadrature(deg)
        worst = 0.0
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                exact = (math.factorial(a) * math.factorial(b)
                         / math.factorial(a + b + 2))
                got = 0.5 * float(rule.weights
                                  @ (rule.points[:, 1] ** a
                                     * rule.points[:, 2] ** b))
                worst = max(worst, abs(got - exact))
        check(f"quadrature degree {deg} monomial exactness", worst < 1e-14,
              f"worst {worst:.1e}")

    params = PhysicalParams()
    rng = np.random.default_rng(7)
    phi = rng.uniform(0.01, 0.999, 1000)
    k_perm = params.d_p ** 2 * phi ** 3 / (params.a * (1.0 - phi) ** 2)
    f_forch = params.b / np.sqrt(params.a * phi ** 3)
    rel1 = np.abs(linear_drag_coeff(phi, params) - phi / k_perm) / (phi / k_perm)
    rel2 = np.abs(forchheimer_coeff(phi, params)
                  - f_forch * phi / np.sqrt(k_perm)) / (f_forch * phi / np.sqrt(k_perm))
    check("drag coefficients match compositional forms",
          rel1.max() < 1e-12 and rel2.max() < 1e-12,
          f"worst {max(rel1.max(), rel2.max()):.1e}")

    case = build_mms_case()
    rep = transport_identity_check(case.velocity_field(0.0), case.porosity,
                                n_divisions=48, degree=9)
    check("transport identity (divergence-free field)", rep.relative < 1e-6,
          f"relative residual {rep.relative:.1e}")

    w_fn, mat_fn = default_consistency_field()
    ab2 = ab2_consistency_check(w_fn, mat_fn)
    check("two-step material derivative order",
          1.8 <= ab2.observed_order <= 2.2, f"order {ab2.observed_order:.2f}")

    from porousflow.assembly import make_context
    from porousflow.mesh import generate_rect_mesh
    from porousflow.porous import builtin_porosity
    mesh = generate_rect_mesh((0.0, 1.0), (0.0, 1.0), 4)
    ctx = make_context(mesh, builtin_porosity("constant", value=1.0), params)

    def u_exact(pts):
        x, y = pts[:, 0], pts[:, 1]
        return np.column_stack([x ** 2 - 3 * y ** 2, -3 * x ** 2 - 2 * x * y])

    def forcing(pts, t=None):
        n = len(pts)
        return np.column_stack([np.full(n, 4 * params.mu + 2.0),
                                np.full(n, 6 * params.mu - 3.0)])

    u, p, _ = steady_stokes_solve(ctx, forcing, u_exact)
    err = np.abs(u.node_values() - u_exact(ctx.vspace.node_coords)).max()
    check("mixed-element polynomial exactness", err < 1e-10, f"max {err:.1e}")

    two_layer = case_lib.get_case("two-layer")
    rep2 = validate_porosity_admissibility(two_layer.porosity, two_layer.params,
                                (two_layer.x_extent, two_layer.y_extent), 256)
    check("two-layer porosity flagged inadmissible", not rep2.passed,
          f"margin {rep2.max_margin:.1f}")
    sin_case = case_lib.get_case("sinusoidal")
    rep3 = validate_porosity_admissibility(sin_case.porosity, sin_case.params,
                                (sin_case.x_extent, sin_case.y_extent), 256)
    check("sinusoidal porosity admissible", rep3.passed,
          f"margin {rep3.max_margin:.1f}")

    print(f"{'all checks passed' if failures == 0 else f'{failures} check(s) failed'}")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="porousflow",
        description="Finite element solver for flow in non-homogeneous "
                    "porous media")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eoc = sub.add_parser("eoc", help="manufactured-solution convergence study")
    p_eoc.add_argument("--n-list", default="8,16,32",
                       help="comma-separated ascending resolutions")
    p_eoc.add_argument("--t-final", type=float, default=1.0)
    p_eoc.add_argument("--out-dir", default=None)
    p_eoc.set_defaults(func=_cmd_eoc)

    p_sim = sub.add_parser("simulate", help="run a bundled experiment case")
    p_sim.add_argument("case", choices=case_lib.case_names())
    p_sim.add_argument("--n", type=int, default=None)
    p_sim.add_argument("--tau", type=float, default=None)
    p_sim.add_argument("--t-final", type=float, default=None)
    p_sim.add_argument("--snapshot-every", type=int, default=None)
    p_sim.add_argument("--out-dir", default=None)
    p_sim.add_argument("--config", default=None,
                       help="flat key = value defaults file")
    p_sim.add_argument("--show-config", action="store_true",
                       help="print the resolved configuration and exit")
    p_sim.set_defaults(func=_cmd_simulate)

    p_val = sub.add_parser("validate-porosity",
                           help="check a case porosity against the "
                                "gradient-bound hypothesis")
    p_val.add_argument("case", choices=case_lib.case_names())
    p_val.add_argument("--resolution", type=int, default=512)
    p_val.add_argument("--out", default=None, help="write a JSON report")
    p_val.set_defaults(func=_cmd_validate_porosity)

    p_chk = sub.add_parser("check", help="run the quick invariant suite")
    p_chk.set_defaults(func=_cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def app() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    app()
