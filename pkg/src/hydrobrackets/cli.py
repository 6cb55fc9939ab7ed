"""Command-line front end: checks, charts, hodograph solves, axiom sweeps.

Configs are JSON files (see `hydrobrackets.config`); positional config
arguments also accept the name of a built-in example.  Exit codes are a
stable contract: 0 pass, 2 a check ran and failed, 1 usage or internal
error.  Identical config, seed and tolerances produce byte-identical JSON
reports.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np

from . import fieldbracket as fb
from . import hodograph as hg
from . import library, verify
from .config import load_config
from .errors import (
    ConfigError, HydroBracketsError, NotFlatError, StepTooSmallWarning,
)

PASS, FAIL, ERROR = 0, 2, 1


class _Parser(argparse.ArgumentParser):
    # usage problems are exit code 1; 2 is reserved for checked failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ERROR, f"{self.prog}: error: {message}\n")


def _build_parser():
    shared = _Parser(add_help=False)
    shared.add_argument("--tol-zero", type=float, default=None,
                        help="override the algebraic-residual tolerance")
    shared.add_argument("--tol-flat", type=float, default=None,
                        help="override the flat-chart constancy tolerance")
    shared.add_argument("--grid", type=int, default=None,
                        help="grid resolution (chart grid, field points, "
                             "flow-marching cells)")
    shared.add_argument("--seed", type=int, default=None,
                        help="base seed for generated functionals")
    shared.add_argument("--out", default=None,
                        help="write the report (JSON) or table (CSV) here")
    shared.add_argument("--force", action="store_true",
                        help="solve even if the compatibility check fails")

    parser = _Parser(prog="hydrobrackets",
                     description="verify hydrodynamic bracket classes and "
                                 "integrate diagonal systems")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[shared],
                       help="classify a bracket candidate", )
    p.add_argument("config", help="config path or built-in name")
    p.add_argument("--class", dest="bracket_class", default="auto",
                   choices=("dn", "mf", "fer", "liouville", "auto"))

    p = sub.add_parser("flat-coords", parents=[shared],
                       help="develop canonical coordinates of a flat metric")
    p.add_argument("config", help="config path or built-in name")

    p = sub.add_parser("hodograph", parents=[shared],
                       help="solve a diagonal system by commuting flows")
    p.add_argument("config", help="config path or built-in name")

    p = sub.add_parser("jacobi", parents=[shared],
                       help="sweep the bracket axioms over random functionals")
    p.add_argument("config", help="config path or built-in name")

    sub.add_parser("examples", parents=[shared], help="list built-in examples")
    return parser


def _resolve(ref):
    if os.path.exists(ref):
        return load_config(ref)
    if os.path.basename(ref) == ref and not ref.endswith(".json"):
        try:
            return library.load(ref)
        except KeyError as err:
            raise ConfigError(str(err.args[0])) from err
    raise ConfigError(f"config file not found: {ref}")


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_check(args):
    lc = _resolve(args.config)
    tol = args.tol_zero if args.tol_zero is not None else lc.tolerances["tol_zero"]
    run = {
        "dn": verify.check_dn,
        "mf": verify.check_mf,
        "fer": verify.check_ferapontov,
        "liouville": verify.check_liouville,
        "auto": verify.classify,
    }[args.bracket_class]
    report = run(lc.system, tol_zero=tol)
    print(report)
    if args.out:
        _write_text(args.out, report.to_json())
    return PASS if report.passed else FAIL


def cmd_flat_coords(args):
    lc = _resolve(args.config)
    tol = args.tol_flat if args.tol_flat is not None else lc.tolerances["tol_flat"]
    try:
        chart = verify.develop_flat_coords(lc.system, resolution=args.grid or 64,
                                           tol_flat=tol)
    except NotFlatError as err:
        print(f"not flat: {err}", file=sys.stderr)
        return FAIL
    print(_dump(chart.summary_dict()), end="")
    if args.out:
        n = lc.system.N
        grids = np.meshgrid(*chart.axes, indexing="ij")
        cols = [g.ravel() for g in grids]
        cols += [chart.values[..., k].ravel() for k in range(n)]
        header = ",".join(lc.system.coords) + "," + ",".join(
            f"n{k + 1}" for k in range(n))
        np.savetxt(args.out, np.column_stack(cols), delimiter=",",
                   header=header, comments="", fmt="%.17e")
    return PASS if chart.passed else FAIL


def _spacetime_window(sys, flow, seed):
    """Derive a solve window around the hodograph image of the seed point.

    The window is sized from the inverse Jacobian so the solution branch
    stays well inside the sampled coordinate box.
    """
    seed = np.asarray(seed, dtype=float)
    w = flow.w_at(seed)
    v = hg.speeds_at(sys, seed[None, :])[0]
    if sys.N < 2:
        raise ConfigError("hodograph section needs explicit x_window/t_window "
                          "for single-component systems")
    tstar = (w[0] - w[1]) / (v[0] - v[1])
    xstar = w[0] - tstar * v[0]
    jac = flow.dw_at(seed) - tstar * hg.speeds_d1_at(sys, seed[None, :])[0].T
    dr_dx = np.linalg.solve(jac, np.ones(sys.N))
    dr_dt = np.linalg.solve(jac, v)
    half = 0.5 * (np.asarray(sys.box.hi) - np.asarray(sys.box.lo))
    dx = float(np.min(0.3 * half / np.abs(dr_dx)))
    dt = float(np.min(0.3 * half / np.abs(dr_dt)))
    return (xstar - dx, xstar + dx), (tstar - dt, tstar + dt)


def cmd_hodograph(args):
    lc = _resolve(args.config)
    sys_, tol = lc.system, lc.tolerances
    tol_zero = args.tol_zero if args.tol_zero is not None else tol["tol_zero"]
    report = hg.semi_hamiltonian_check(sys_, tol_zero=tol_zero,
                                       gap_tol=tol["gap_tol"])
    print(report)
    if not report.passed and not args.force:
        print("refusing to solve a system that fails the compatibility check "
              "(use --force to override)", file=sys.stderr)
        return FAIL

    section = lc.hodograph
    if "w" in section:
        flow = hg.closed_form_flow(sys_, section["w"], gap_tol=tol["gap_tol"])
    elif "boundary" in section:
        resolution = args.grid or section.get("resolution", 256)
        flow = hg.integrate_commuting_flow(
            sys_, section["boundary"][0], section["boundary"][1],
            resolution=resolution, basepoint=section.get("basepoint"),
            tol_goursat=tol["tol_goursat"], gap_tol=tol["gap_tol"])
    else:
        raise ConfigError("config declares no commuting flow: the hodograph "
                          "section needs either 'w' or 'boundary'")
    print(f"flow [{flow.kind}]: defining residual "
          f"{flow.residual:.3e} ({flow.provenance})")

    seed = section["seed"] if "seed" in section else sys_.box.center
    if "x_window" in section and "t_window" in section:
        x_window = tuple(section["x_window"])
        t_window = tuple(section["t_window"])
    else:
        x_window, t_window = _spacetime_window(sys_, flow, seed)
    sol = hg.hodograph_solve(sys_, flow, x_window=x_window, t_window=t_window,
                             nx=section.get("nx", 256), nt=section.get("nt", 33),
                             seed=seed, newton_tol=tol["newton_tol"])
    audit = hg.verify_solution(sol, sys_)
    print(f"solved {sol.n_converged}/{sol.converged.size} spacetime points "
          f"on x={x_window[0]:.6g}..{x_window[1]:.6g} "
          f"t={t_window[0]:.6g}..{t_window[1]:.6g}")
    print(f"pde residual: max {audit.max_residual:.3e} mean "
          f"{audit.mean_residual:.3e} over {audit.n_points} points")
    if args.out:
        hg.save_solution_csv(args.out, sol)
    return PASS


def _sample_field(sys, m, seed):
    """Deterministic smooth periodic field staying inside the sample box."""
    lo = np.asarray(sys.box.lo)
    hi = np.asarray(sys.box.hi)
    center = (lo + hi) / 2
    half = (hi - lo) / 2
    rng = np.random.default_rng(seed)
    x = np.arange(m) * 2 * np.pi / m
    vals = np.empty((sys.N, m))
    for comp in range(sys.N):
        # bounded harmonics: total amplitude stays below half the box size
        acc = np.full(m, center[comp])
        for j in range(1, 5):
            a, b = rng.uniform(-1.0, 1.0, size=2)
            acc += 0.1 * half[comp] * (a * np.cos(j * x) + b * np.sin(j * x)) / j
        vals[comp] = acc
    return fb.GridField(vals)


def cmd_jacobi(args):
    lc = _resolve(args.config)
    sys_ = lc.system
    m = args.grid or 64
    base = args.seed if args.seed is not None else 0
    tol = args.tol_zero if args.tol_zero is not None else lc.tolerances["tol_jacobi"]
    field = _sample_field(sys_, m, base)
    residuals = []
    floored = 0
    for k in range(20):
        triple = [fb.random_polynomial_functional(
            sys_.coords, degree=3, seed=base + 3 * k + j, name=f"F{3 * k + j}")
            for j in range(3)]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            residuals.append(abs(fb.jacobi_residual(
                sys_, triple[0], triple[1], triple[2], field)))
        floored += any(issubclass(w.category, StepTooSmallWarning)
                       for w in caught)
    worst = int(np.argmax(residuals))
    top = residuals[worst]
    ok = top < tol
    note = f" ({floored} at the roundoff floor)" if floored else ""
    print(f"jacobi [{'pass' if ok else 'FAIL'}]: max residual {top:.3e} "
          f"(tol {tol:.1e}) over {len(residuals)} seeded triples at M={m}; "
          f"worst triple seeds {base + 3 * worst}..{base + 3 * worst + 2}{note}")
    if args.out:
        _write_text(args.out, _dump({
            "system": sys_.name,
            "m": m,
            "seed": base,
            "n_triples": len(residuals),
            "residuals": residuals,
            "max_residual": top,
            "worst_triple": worst,
            "tol": tol,
            "pass": ok,
        }))
    return PASS if ok else FAIL


def cmd_examples(args):
    for name in library.names():
        print(name)
    return PASS


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    handler = {
        "check": cmd_check,
        "flat-coords": cmd_flat_coords,
        "hodograph": cmd_hodograph,
        "jacobi": cmd_jacobi,
        "examples": cmd_examples,
    }[args.command]
    try:
        return handler(args)
    except (ConfigError, HydroBracketsError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
