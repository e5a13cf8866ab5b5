"""Command-line front end.

One subcommand per experiment family (``stokes``, ``convergence``,
``infsup``, ``locking``, ``weakbc``) plus ``selftest``, which replays the
acceptance checks and prints a pass/fail table.  Results serialize to
JSON (floats at 17 significant digits), CSV (always with a header row),
and legacy-ASCII VTK for field inspection.

Exit codes: 0 success (including the expected singular equal-order pair,
reported as ``status: singular``), 1 numerical failure, 2 usage error.
``INFSUP_LAB_THREADS`` fans independent mesh levels / penalty values out
across worker threads; the default is 1.
"""

import argparse
import csv
import dataclasses
import datetime
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__, infsup, locking, selftest, stokes, verify, weakbc
from .fespace import ElementKind, FeSpace
from .linalg import NotPositiveDefinite, SingularMatrix
from .mesh import Mesh, unit_square_mesh

_PAIR_ALIASES = {"th": "taylor-hood"}


class UsageError(ValueError):
    """Bad arguments or environment; maps to exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    """Validated per-subcommand parameters, echoed into the JSON output."""

    subcommand: str
    n: int | None = None
    ns: tuple | None = None
    method: str | None = None
    pair: str | None = None
    mode: str | None = None
    trace: str | None = None
    eps: float | None = None
    alpha: float | None = None
    gamma: float | None = None
    lambdas: tuple | None = None
    c_omega: float | None = None
    w_mass: str | None = None
    gamma_space: str | None = None
    grad_div_form: bool | None = None
    seed: int | None = None
    json_path: str | None = None
    csv_path: str | None = None
    vtk_path: str | None = None

    def as_dict(self) -> dict:
        raw = dataclasses.asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in raw.items() if v is not None}


def _worker_count() -> int:
    raw = os.environ.get("INFSUP_LAB_THREADS", "1")
    try:
        workers = int(raw)
    except ValueError:
        raise UsageError(f"INFSUP_LAB_THREADS must be an integer, got {raw!r}")
    if workers < 1:
        raise UsageError(f"INFSUP_LAB_THREADS must be >= 1, got {workers}")
    return workers


def _thread_map(fn, items):
    items = list(items)
    workers = min(_worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _float_text(x: float) -> str:
    if not np.isfinite(x):
        return "null"                   # JSON has no NaN/inf
    return format(float(x), ".17g")


def _json_text(obj, indent: int = 0) -> str:
    """JSON with floats at 17 significant digits (stdlib json hardwires
    shortest-repr float formatting)."""
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        rows = [f'{pad}  "{k}": {_json_text(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(rows) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            return "[]"
        rows = [f"{pad}  {_json_text(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(rows) + f"\n{pad}]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float_text(obj)
    if obj is None:
        return "null"
    import json
    return json.dumps(str(obj))


def _write_json(path: str, config: RunConfig, results, status: str) -> None:
    doc = {
        "config": config.as_dict(),
        "results": results,
        "status": status,
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc)
                     .isoformat(timespec="seconds"),
    }
    with open(path, "w") as fh:
        fh.write(_json_text(doc) + "\n")


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_float_text(v) if isinstance(v, float) else v
                             for v in row])


def _write_vtk(path: str, mesh: Mesh, point_scalars=None, point_vectors=None,
               cell_scalars=None, title: str = "infsup-lab field export") -> None:
    """Legacy ASCII VTK: linear triangles (cell type 5), nodal fields as
    POINT_DATA, elementwise-constant fields as CELL_DATA."""
    out = ["# vtk DataFile Version 3.0", title, "ASCII",
           "DATASET UNSTRUCTURED_GRID"]
    n_pts, n_tris = len(mesh.nodes), len(mesh.triangles)
    out.append(f"POINTS {n_pts} double")
    out.extend(f"{_float_text(x)} {_float_text(y)} 0" for x, y in mesh.nodes)
    out.append(f"CELLS {n_tris} {4 * n_tris}")
    out.extend(f"3 {a} {b} {c}" for a, b, c in mesh.triangles)
    out.append(f"CELL_TYPES {n_tris}")
    out.extend("5" for _ in range(n_tris))
    if point_scalars or point_vectors:
        out.append(f"POINT_DATA {n_pts}")
        for name, vals in (point_scalars or {}).items():
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            out.extend(_float_text(v) for v in vals)
        for name, vecs in (point_vectors or {}).items():
            out.append(f"VECTORS {name} double")
            out.extend(f"{_float_text(vx)} {_float_text(vy)} 0"
                       for vx, vy in vecs)
    if cell_scalars:
        out.append(f"CELL_DATA {n_tris}")
        for name, vals in cell_scalars.items():
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            out.extend(_float_text(v) for v in vals)
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def _vertex_values(space: FeSpace, vec: np.ndarray) -> np.ndarray:
    """(n_nodes, components) samples of a coefficient vector; every nodal
    element numbers its vertex dofs first."""
    n_nodes = len(space.mesh.nodes)
    cols = [vec[c * space.n_scalar_dofs: c * space.n_scalar_dofs + n_nodes]
            for c in range(space.components)]
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# subcommand runners: return (results, status, stdout lines)
# ---------------------------------------------------------------------------

def _stokes_errors_dict(method, n: int) -> dict:
    problem = stokes.manufactured_problem()
    solution = stokes.run(method, unit_square_mesh(n), problem.f)
    u_l2, u_h1, p_l2 = stokes.errors(solution, problem)
    return {"err_u_l2": u_l2, "err_u_h1": u_h1, "err_p_l2": p_l2,
            "_solution": solution}


def _run_stokes(config: RunConfig):
    method = stokes.method_from_name(config.method, config.eps)
    h = float(np.sqrt(2.0) / config.n)
    try:
        res = _stokes_errors_dict(method, config.n)
    except SingularMatrix as exc:
        if method.name != "p1p1-plain":
            raise                       # singularity only expected there
        results = {"h": h, "error": str(exc)}
        return results, "singular", [f"status: singular ({exc})"]
    solution = res.pop("_solution")
    results = {"h": h, **res, "residual_norm": solution.residual_norm}
    if config.csv_path:
        header = ["h", "err_u_l2", "err_u_h1", "err_p_l2"]
        _write_csv(config.csv_path, header,
                   [[h, res["err_u_l2"], res["err_u_h1"], res["err_p_l2"]]])
    if config.vtk_path:
        mesh = solution.v_space.mesh
        vectors = {"velocity": _vertex_values(solution.v_space, solution.u)}
        if solution.z is not None:
            vectors["projection"] = _vertex_values(solution.v_space, solution.z)
        point, cell = {}, None
        if solution.p_space.kind is ElementKind.P0:
            cell = {"pressure": solution.p}
        else:
            point["pressure"] = solution.p[:len(mesh.nodes)]
        _write_vtk(config.vtk_path, mesh, point_scalars=point,
                   point_vectors=vectors, cell_scalars=cell)
    line = "  ".join([f"h={h:.5f}"] + [f"{k}={results[k]:.6e}"
                     for k in ("err_u_l2", "err_u_h1", "err_p_l2")])
    return results, "ok", [line]


def _run_convergence(config: RunConfig):
    method = stokes.method_from_name(config.method, config.eps)

    def level(n):
        try:
            res = _stokes_errors_dict(method, n)
            res.pop("_solution")
            return res
        except Exception as exc:        # recorded per level by verify
            return exc

    computed = dict(zip(config.ns, _thread_map(level, config.ns)))

    def builder(n):
        value = computed[n]
        if isinstance(value, Exception):
            raise value
        return value

    report = verify.run_convergence(builder, config.ns, method=method.name,
                                    problem="stokes-mms")
    results = verify.report_dict(report)
    if config.csv_path:
        header, rows = verify.report_rows(report)
        _write_csv(config.csv_path, header, rows)
    lines = [f"slope[{k}] = {v:.3f}" for k, v in sorted(report.slopes.items())]
    for lv in report.levels:
        if lv.failure:
            lines.append(f"h={lv.h:.5f}: {lv.failure}")
    return results, "ok", lines


def _run_infsup(config: RunConfig):
    mesh = unit_square_mesh(config.n)
    report = infsup.study(config.pair, mesh, weighted=config.mode == "weighted")
    results = {
        "pair": report.pair, "mode": report.mode, "h": report.h,
        "beta": report.beta, "numerical_rank": report.numerical_rank,
        "kernel_dim_pressure": report.kernel_dim_pressure,
        "sigma": list(report.sigma),
    }
    if config.csv_path:
        _write_csv(config.csv_path, ["index", "sigma"],
                   list(enumerate(report.sigma)))
    if config.vtk_path:
        mode_vec = infsup.spurious_mode(report)
        _, pkind = infsup.PAIRS[config.pair]
        if pkind is ElementKind.P0:
            _write_vtk(config.vtk_path, mesh,
                       cell_scalars={"pressure_mode": mode_vec})
        else:
            _write_vtk(config.vtk_path, mesh,
                       point_scalars={"pressure_mode":
                                      mode_vec[:len(mesh.nodes)]})
    line = (f"beta={report.beta:.6f}  pair={report.pair}  mode={report.mode}"
            f"  rank={report.numerical_rank}"
            f"  pressure_kernel_dim={report.kernel_dim_pressure}")
    return results, "ok", [line]


def _run_locking(config: RunConfig):
    base = _locking_configs(config)[0]
    reports = _thread_map(
        lambda lam: locking.run(dataclasses.replace(base, lambda_=lam)),
        config.lambdas)
    rows = [{"lambda": r.lambda_, "u_h1_norm": r.u_h1_norm,
             "p_h1_norm": r.p_h1_norm, "solve_ok": r.solve_ok}
            for r in reports]
    results = {"method": base.method, "n": base.n, "reports": rows}
    status = "ok" if all(r.solve_ok for r in reports) else "singular"
    if config.csv_path:
        _write_csv(config.csv_path,
                   ["lambda", "u_h1_norm", "p_h1_norm", "solve_ok"],
                   [[r.lambda_, r.u_h1_norm, r.p_h1_norm, r.solve_ok]
                    for r in reports])
    if config.vtk_path:
        solved = [r.lambda_ for r in reports if r.solve_ok]
        if solved:
            cfg = dataclasses.replace(base, lambda_=solved[-1])
            blocks = locking._blocks(cfg)
            sol = locking.solve(locking.build(cfg), blocks=blocks)
            _write_vtk(config.vtk_path, blocks.u_space.mesh,
                       point_scalars={"p": sol.p},
                       point_vectors={"u": _vertex_values(blocks.u_space,
                                                          sol.u)})
    lines = [f"lambda={r.lambda_:.3e}  u_h1={r.u_h1_norm:.6e}  "
             f"p_h1={r.p_h1_norm:.6e}" + ("" if r.solve_ok else "  (singular)")
             for r in reports]
    return results, status, lines


def _run_weakbc(config: RunConfig):
    method = weakbc.method_from_name(config.method, alpha=config.alpha,
                                     gamma=config.gamma, trace=config.trace)
    mesh = unit_square_mesh(config.n)
    problem = weakbc.mms_problem()
    solution = weakbc.run(method, mesh, problem.f, problem.d)
    err_l2, err_h1 = weakbc.errors(mesh, solution.u, problem)
    results = {"method": method.name, "h": mesh.h, "err_l2": err_l2,
               "err_h1": err_h1, "residual_norm": solution.residual_norm}
    if solution.lam is not None:
        results["multiplier_roughness"] = weakbc.lambda_roughness(
            solution, mesh, method.trace)
    if config.csv_path:
        _write_csv(config.csv_path, ["h", "err_l2", "err_h1"],
                   [[mesh.h, err_l2, err_h1]])
    if config.vtk_path:
        _write_vtk(config.vtk_path, mesh, point_scalars={"u": solution.u})
    return results, "ok", [f"err_l2={err_l2:.6e}  err_h1={err_h1:.6e}"]


def _run_selftest(config: RunConfig):
    checks = selftest.run_all(seed=config.seed)
    results = [{"number": c.number, "label": c.label, "passed": c.passed,
                "detail": c.detail} for c in checks]
    lines = [f"{c.number:2d}  {'ok  ' if c.passed else 'FAIL'}  {c.label}"
             f"  [{c.detail}]" for c in checks]
    n_ok = sum(c.passed for c in checks)
    lines.append(f"{n_ok}/{len(checks)} checks passed")
    status = "ok" if n_ok == len(checks) else "fail"
    return results, status, lines


_RUNNERS = {
    "stokes": _run_stokes,
    "convergence": _run_convergence,
    "infsup": _run_infsup,
    "locking": _run_locking,
    "weakbc": _run_weakbc,
    "selftest": _run_selftest,
}


# ---------------------------------------------------------------------------
# argument parsing and validation
# ---------------------------------------------------------------------------

def _float_list(text: str) -> tuple:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")


def _add_outputs(sub, vtk: bool = True) -> None:
    sub.add_argument("--json", metavar="PATH", help="write a JSON report")
    sub.add_argument("--csv", metavar="PATH", help="write a CSV report")
    if vtk:
        sub.add_argument("--vtk", metavar="PATH",
                         help="write fields as legacy ASCII VTK")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="infsup-lab",
        description="Saddle-point stability laboratory on the unit square.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    methods = stokes.method_names() + ["bp", "gls", "dw", "th"]
    st = sub.add_parser("stokes", formatter_class=fmt,
                        help="solve one manufactured Stokes problem and "
                             "report errors")
    st.add_argument("--method", required=True, choices=methods)
    st.add_argument("--n", type=int, default=8, help="mesh cells per side")
    st.add_argument("--eps", type=float, default=None,
                    help="stabilization weight (stabilized methods; "
                         "default 0.05)")
    _add_outputs(st)

    cv = sub.add_parser("convergence", formatter_class=fmt,
                        help="manufactured-solution error study over mesh "
                             "levels")
    cv.add_argument("--method", required=True, choices=methods)
    cv.add_argument("--ns", type=_int_list, default=(8, 16, 32),
                    help="comma-separated mesh sizes (at least 3)")
    cv.add_argument("--eps", type=float, default=None,
                    help="stabilization weight (stabilized methods; "
                         "default 0.05)")
    _add_outputs(cv, vtk=False)

    inf = sub.add_parser("infsup", formatter_class=fmt,
                         help="discrete inf-sup constant of an element pair")
    inf.add_argument("--pair", required=True,
                     choices=list(infsup.PAIRS) + list(_PAIR_ALIASES))
    inf.add_argument("--n", type=int, default=8, help="mesh cells per side")
    inf.add_argument("--mode", choices=("euclidean", "weighted"),
                     default="weighted", help="norms for the constant")
    _add_outputs(inf)

    lk = sub.add_parser("locking", formatter_class=fmt,
                        help="penalized problem: locking sweep over "
                             "penalty values")
    lk.add_argument("--method", default="plain",
                    choices=("plain", "corrected", "multiplier"))
    lk.add_argument("--lambdas", type=_float_list, default=(1e2, 1e4, 1e6),
                    help="comma-separated penalty values")
    lk.add_argument("--n", type=int, default=8, help="mesh cells per side")
    lk.add_argument("--c-omega", type=float, dest="c_omega",
                    default=locking.DEFAULT_POINCARE,
                    help="Poincare constant in the corrected split")
    lk.add_argument("--w-mass", dest="w_mass", default="lumped",
                    choices=("lumped", "consistent"),
                    help="mass realization of the corrected projection")
    lk.add_argument("--gamma-space", dest="gamma_space",
                    default="discontinuous",
                    choices=("discontinuous", "continuous"),
                    help="multiplier space")
    lk.add_argument("--grad-div", dest="grad_div_form", action="store_true",
                    help="keep one penalty unit inside a(.,.) "
                         "(multiplier method, lambda > 1)")
    _add_outputs(lk)

    wb = sub.add_parser("weakbc", formatter_class=fmt,
                        help="weak Dirichlet conditions for a reaction-"
                             "diffusion problem")
    wb.add_argument("--method", required=True,
                    choices=("multiplier", "barbosa-hughes", "bh", "nitsche"))
    wb.add_argument("--n", type=int, default=8, help="mesh cells per side")
    wb.add_argument("--alpha", type=float, default=None,
                    help="flux-multiplier stabilization weight "
                         "(default 0.5/C_i^2)")
    wb.add_argument("--gamma", type=float, default=None,
                    help="penalty weight (default 4*C_i^2)")
    wb.add_argument("--trace", choices=("p1", "p0"), default="p1",
                    help="multiplier trace space")
    _add_outputs(wb)

    stest = sub.add_parser("selftest", formatter_class=fmt,
                           help="replay the acceptance checks and print a "
                                "pass/fail table")
    stest.add_argument("--seed", type=int, default=42,
                       help="seed for the randomized matrix batch")
    stest.add_argument("--json", metavar="PATH", help="write a JSON report")
    return parser


def _locking_configs(config: RunConfig) -> list:
    return [locking.LockingConfig(
                lambda_=lam, n=config.n, method=config.method,
                poincare_const=config.c_omega, w_mass=config.w_mass,
                gamma_space=config.gamma_space,
                grad_div_form=config.grad_div_form)
            for lam in config.lambdas]


def _validate(args: argparse.Namespace) -> RunConfig:
    """Build the typed config, rejecting bad parameters before any
    assembly or solve."""
    sub = args.subcommand
    common = {"json_path": getattr(args, "json", None),
              "csv_path": getattr(args, "csv", None),
              "vtk_path": getattr(args, "vtk", None)}
    if getattr(args, "n", None) is not None and args.n < 1:
        raise UsageError(f"--n must be >= 1, got {args.n}")

    if sub in ("stokes", "convergence"):
        try:
            stokes.method_from_name(args.method, args.eps)
        except ValueError as exc:
            raise UsageError(str(exc))
        if sub == "stokes":
            return RunConfig(subcommand=sub, n=args.n, method=args.method,
                             eps=args.eps, **common)
        if len(args.ns) < 3:
            raise UsageError("convergence needs at least 3 mesh sizes")
        if any(n < 1 for n in args.ns):
            raise UsageError("mesh sizes must be >= 1")
        return RunConfig(subcommand=sub, ns=tuple(args.ns),
                         method=args.method, eps=args.eps, **common)

    if sub == "infsup":
        pair = _PAIR_ALIASES.get(args.pair, args.pair)
        return RunConfig(subcommand=sub, n=args.n, pair=pair,
                         mode=args.mode, **common)

    if sub == "locking":
        if not args.lambdas:
            raise UsageError("--lambdas must name at least one value")
        if any(lam <= 0 for lam in args.lambdas):
            raise UsageError("penalty values must be > 0")
        config = RunConfig(subcommand=sub, n=args.n, method=args.method,
                           lambdas=tuple(args.lambdas), c_omega=args.c_omega,
                           w_mass=args.w_mass, gamma_space=args.gamma_space,
                           grad_div_form=args.grad_div_form, **common)
        try:
            _locking_configs(config)
        except ValueError as exc:
            raise UsageError(str(exc))
        return config

    if sub == "weakbc":
        try:
            weakbc.method_from_name(args.method, alpha=args.alpha,
                                    gamma=args.gamma, trace=args.trace)
        except ValueError as exc:
            raise UsageError(str(exc))
        return RunConfig(subcommand=sub, n=args.n, method=args.method,
                         alpha=args.alpha, gamma=args.gamma,
                         trace=args.trace, **common)

    return RunConfig(subcommand="selftest", seed=args.seed,
                     json_path=args.json)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:           # argparse --help (0) / usage (2)
        return int(exc.code or 0)

    try:
        config = _validate(args)
        _worker_count()
    except UsageError as exc:
        print(f"infsup-lab: error: {exc}", file=sys.stderr)
        return 2

    try:
        results, status, lines = _RUNNERS[config.subcommand](config)
    except (SingularMatrix, NotPositiveDefinite, np.linalg.LinAlgError) as exc:
        print(f"infsup-lab: numerical failure: {exc}", file=sys.stderr)
        if config.json_path:
            _write_json(config.json_path, config,
                        {"error": str(exc)}, "fail")
        return 1

    for line in lines:
        print(line)
    if config.json_path:
        _write_json(config.json_path, config, results, status)
    if config.subcommand == "selftest" and status != "ok":
        return 1
    return 0
