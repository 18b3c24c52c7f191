"""Command-line interface.

Subcommands: solve, homogeneous, verify, audit, geometry-check.  Solve
paths write report.json, solution.csv, trace.csv, audits.json and the
figures next to them; exit code 0 on success, 2 on nonconvergence or
failed checks (partial report still written), 1 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import catalog, pde, plots, solver, verify
from .errors import DomainError
from .geometry import RadialField, SphereGrid, geometry_points, load_field_csv, save_field_csv

USAGE_ERROR, NONCONVERGED = 1, 2


def _load_problem(path: str) -> pde.ProblemSpec:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise DomainError(f"problem file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise DomainError(
            f"malformed problem JSON at line {err.lineno}, column {err.colno}: {err.msg}"
        ) from None
    return pde.ProblemSpec.from_json(obj)


def _check_res(res: int) -> int:
    if not 16 <= res <= 128:
        raise DomainError(f"resolution must lie in [16, 128], got {res}")
    if res % 2:
        raise DomainError("resolution must be even")
    return res


def _config_from_args(args) -> solver.SolverConfig:
    kw = {}
    if args.tol is not None:
        kw["newton_tol"] = args.tol
    if getattr(args, "t_steps", None) is not None:
        kw["t_steps"] = tuple(np.linspace(0.0, 1.0, args.t_steps))
    if getattr(args, "eps_schedule", None) is not None:
        kw["eps_schedule"] = tuple(float(x) for x in args.eps_schedule.split(","))
    if args.jacobian is not None:
        kw["jacobian"] = args.jacobian
    return solver.SolverConfig(**kw)


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n")


def _write_solution_csv(report: solver.SolveReport, spec, path: Path) -> None:
    field = report.u_final
    grid = field.grid
    gp = geometry_points(field)
    state = pde.evaluate_state(field, spec)
    margins = np.min(state.sig[:, 1:], axis=1)
    header = (
        [f"theta_{a+1}" for a in range(grid.n)]
        + ["rho"]
        + [f"kappa_{i+1}" for i in range(grid.n)]
        + ["cone_margin"]
    )
    cols = [grid.coords[:, a] for a in range(grid.n)] + [gp.rho]
    cols += [gp.kappa[:, i] for i in range(grid.n)]
    cols += [margins]
    np.savetxt(path, np.column_stack(cols), delimiter=",",
               header=",".join(header), comments="", fmt="%.17g")


def _write_trace_csv(trace, path: Path) -> None:
    header = ("step,kind,value,newton_iters,res_initial,res_final,"
              "min_rho,max_rho,cone_margin,min_h_eig")
    rows = []
    for i, s in enumerate(trace):
        rows.append(
            f"{i},{s.kind},{s.value!r},{s.newton_iters},{s.res_initial!r},"
            f"{s.res_final!r},{s.min_rho!r},{s.max_rho!r},{s.cone_margin!r},"
            f"{s.min_h_eig!r}"
        )
    path.write_text(header + "\n" + "\n".join(rows) + "\n")


def _emit_solve_outputs(report: solver.SolveReport, spec, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    payload = report.to_json()
    payload["meta"]["created"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    _write_json(payload, out / "report.json")
    if report.trace:
        _write_trace_csv(report.trace, out / "trace.csv")
        plots.render_trace(report.trace, out / "fig_trace.png")
    if report.audits is not None:
        _write_json(report.audits.to_json(), out / "audits.json")
    # solution data only for fully admissible final fields
    if report.u_final is not None and report.converged:
        _write_solution_csv(report, spec, out / "solution.csv")
        save_field_csv(report.u_final, out / "field.csv")
        plots.render_field(report.u_final, out / "fig_solution.png")
    if report.gamma_sequence:
        eps = [s.value for s in report.trace if s.kind == "eps"]
        if len(eps) == len(report.gamma_sequence) and report.gamma is not None:
            plots.render_gamma(eps, report.gamma_sequence, report.gamma,
                               out / "fig_gamma.png")


def _print_notes(spec: pde.ProblemSpec) -> None:
    for note in spec.notes:
        print(f"note: {note}", file=sys.stderr)


def _cmd_solve(args) -> int:
    spec = _load_problem(args.problem)
    _print_notes(spec)
    if spec.regime != "nonhomogeneous":
        raise DomainError(
            f"'solve' needs a nonhomogeneous problem (radial exponent > 0); "
            f"this one is {spec.regime} -- use the 'homogeneous' subcommand"
            if spec.regime == "homogeneous"
            else f"'solve' needs -b-q-k+l > 0, got {spec.exponent}"
        )
    grid = SphereGrid(spec.n, _check_res(args.res))
    config = _config_from_args(args)
    report = solver.continuation_solve(spec, config=config, grid=grid)
    out = Path(args.out)
    _emit_solve_outputs(report, spec, out)
    if not report.converged:
        print(f"nonconvergence: {report.failure}", file=sys.stderr)
        return NONCONVERGED
    rho = report.rho
    print(f"converged: rho in [{rho.min():.12g}, {rho.max():.12g}], "
          f"residual {report.residual_sup:.3e}, outputs in {out}")
    return 0


def _cmd_homogeneous(args) -> int:
    spec = _load_problem(args.problem)
    _print_notes(spec)
    grid = SphereGrid(spec.n, _check_res(args.res))
    config = _config_from_args(args)
    report = solver.homogeneous_solve(spec, config=config, grid=grid)
    out = Path(args.out)
    _emit_solve_outputs(report, spec, out)
    if not report.converged:
        print(f"nonconvergence: {report.failure}", file=sys.stderr)
        return NONCONVERGED
    print(f"converged: gamma = {report.gamma:.12g} "
          f"(sequence {['%.6g' % g for g in report.gamma_sequence]}, "
          f"cauchy={'yes' if report.gamma_cauchy else 'NO'}), outputs in {out}")
    if not report.gamma_cauchy:
        print("warning: gamma sequence spread exceeds 1e-3; extrapolation flagged",
              file=sys.stderr)
    return 0


def _cmd_verify(args) -> int:
    t0 = time.monotonic()
    sym = verify.run_symfun_suite(args.trials, args.seed)
    ext = verify.run_exterior_suite(args.trials, args.seed)
    reports = sym + ext
    print(verify.format_reports(reports))
    print(f"elapsed: {time.monotonic() - t0:.1f}s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json([r.to_json() for r in reports], out / "verify.json")
    plots.render_slack(reports, out / "fig_slack.png")
    failed = [r.name for r in reports if r.passed is False]
    if failed:
        print(f"FAILED: {failed}", file=sys.stderr)
        return NONCONVERGED
    return 0


def _cmd_audit(args) -> int:
    spec = _load_problem(args.problem)
    _print_notes(spec)
    field = load_field_csv(args.solution)
    if field.grid.n != spec.n:
        raise DomainError("solution grid dimension does not match the problem")
    audit = pde.audit_bounds(field, spec)
    state = pde.evaluate_state(field, spec)
    cert = solver.convexity_certificate(field, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "residual_sup": state.sup_norm if state.all_admissible else None,
        "all_admissible": bool(state.all_admissible),
        "audit": audit.to_json(),
        "certificate": cert.to_json(),
    }
    _write_json(payload, out / "audits.json")
    plots.render_field(field, out / "fig_solution.png", title="audited field")
    flags = [audit.c0_pass, audit.grad_finite, state.all_admissible]
    print(json.dumps(payload, indent=2))
    return 0 if all(f is not False for f in flags) else NONCONVERGED


def _cmd_geometry_check(args) -> int:
    resolutions = [int(r) for r in args.resolutions.split(",")]
    errors = []
    for res in resolutions:
        grid = SphereGrid(2, res)
        field = catalog.oblate_field(grid, args.eccentricity)
        gp = geometry_points(field)
        km, kp = catalog.oblate_curvatures(grid.coords[:, 0], args.eccentricity)
        exact = np.sort(np.stack([km, kp], axis=1), axis=1)
        errors.append(float(np.max(np.abs(np.sort(gp.kappa, axis=1) - exact))))
    orders = [
        float(np.log2(errors[i - 1] / errors[i]) / np.log2(resolutions[i] / resolutions[i - 1]))
        for i in range(1, len(errors))
    ]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "resolutions": resolutions,
        "max_errors": errors,
        "observed_orders": orders,
        "eccentricity": args.eccentricity,
    }
    _write_json(payload, out / "geometry_check.json")
    plots.render_convergence(resolutions, errors, out / "fig_convergence.png")
    print(json.dumps(payload, indent=2))
    return 0 if min(orders) >= 1.9 else NONCONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pkcurv",
        description="Quotient-type prescribed curvature equations on star-shaped "
                    "hypersurfaces: solvers, audits and property suites.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, eps=False):
        sp.add_argument("--problem", required=True, help="problem JSON path")
        sp.add_argument("--res", type=int, default=32, help="grid points per angle")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--tol", type=float, default=None, help="Newton residual tolerance")
        sp.add_argument("--jacobian", choices=("exact", "frozen", "auto"), default=None)
        sp.add_argument("--seed", type=int, default=0)
        if eps:
            sp.add_argument("--eps-schedule", default=None,
                            help="comma list, e.g. 0.2,0.1,0.05,0.025")
        else:
            sp.add_argument("--t-steps", type=int, default=None,
                            help="number of continuation steps")

    sp = sub.add_parser("solve", help="nonhomogeneous continuation solve")
    common(sp)
    sp.set_defaults(fn=_cmd_solve)

    sp = sub.add_parser("homogeneous", help="scale-invariant eigenvalue solve")
    common(sp, eps=True)
    sp.set_defaults(fn=_cmd_homogeneous)

    sp = sub.add_parser("verify", help="run the property suites")
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="out")
    sp.set_defaults(fn=_cmd_verify)

    sp = sub.add_parser("audit", help="audit a saved solution against a problem")
    sp.add_argument("--problem", required=True)
    sp.add_argument("--solution", required=True, help="field csv (from solve output)")
    sp.add_argument("--out", default="out")
    sp.set_defaults(fn=_cmd_audit)

    sp = sub.add_parser("geometry-check", help="curvature convergence benchmark")
    sp.add_argument("--resolutions", default="16,32,64")
    sp.add_argument("--eccentricity", type=float, default=0.3)
    sp.add_argument("--out", default="out")
    sp.set_defaults(fn=_cmd_geometry_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return USAGE_ERROR if err.code not in (0, None) else 0
    try:
        return args.fn(args)
    except DomainError as err:
        print(f"error: {err}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
