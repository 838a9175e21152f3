"""Command-line harness: ``hofem {bp1,bp3,converge,solve,tmop,hyperbolic}``.

Results go to CSV (stdout unless ``--out`` is given). The exit status is 0
only when every run converged or was otherwise valid; failures print one
JSON line to stderr, e.g. ``{"error": "NotConverged", "message": "..."}``.
"""

import argparse
import json
import sys

from . import benchmarks as bm
from .io import write_csv, write_vtk

SOLVERS = ("none", "jacobi", "chebyshev", "lor", "pmg")
LAWS = ("advection", "shallow-water")

DEFAULTS = {
    "bp1": {"mesh": 8, "order": "1,2,3,4"},
    "bp3": {"mesh": 8, "order": "1,2,3,4"},
    "converge": {"mesh": 4, "order": "1", "levels": 3, "solver": "lor", "tol": 1e-12},
    "solve": {"mesh": 4, "order": "3", "solver": "lor", "tol": 1e-8},
    "tmop": {"mesh": 4, "order": "1"},
    "hyperbolic": {"mesh": 16, "order": "3"},
}


class CLIError(Exception):
    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError("UsageError", message)


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a {kind.__name__}: {text!r}") from None
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return v
    return conv


def _nonnegative_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {text!r}")
    return v


def parse_int_list(text):
    """``"3"``, ``"1,2,4"`` or ``"1-8"`` to a list of positive ints."""
    out = []
    for part in str(text).split(","):
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out or min(out) <= 0:
        raise ValueError(f"expected positive integers, got {text!r}")
    return out


def _common(p):
    p.add_argument("--mesh", help="element counts NX,NY[,NZ]")
    p.add_argument("--dim", type=int, choices=(2, 3))
    p.add_argument("--order", help="degree P, list 1,2,3 or range 1-8")
    p.add_argument("--quad", type=_positive(int), help="1D quadrature points")
    p.add_argument("--levels", type=_nonnegative_int, help="uniform refinements")
    p.add_argument("--solver", choices=SOLVERS)
    p.add_argument("--tol", type=_positive(float), help="relative residual tolerance")
    p.add_argument("--max-iter", type=_positive(int))
    p.add_argument("--cfl", type=_positive(float), default=0.25)
    p.add_argument("--seed", type=_nonnegative_int, default=42)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--vtk", help="VTK output path prefix")
    p.add_argument("--threads", type=_positive(int), default=1,
                   help="accepted for compatibility; reductions are sequential")
    p.add_argument("--deterministic", action="store_true")


def build_parser():
    parser = _Parser(prog="hofem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in [("bp1", "mass benchmark, fixed-iteration CG"),
                        ("bp3", "diffusion benchmark, fixed-iteration CG"),
                        ("converge", "Poisson convergence table"),
                        ("solve", "preconditioned CG solver study"),
                        ("tmop", "mesh optimization demo"),
                        ("hyperbolic", "DG conservation-law run")]:
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "converge":
            p.add_argument("--exact", choices=("sine", "linear"), default="sine")
        if name == "tmop":
            p.add_argument("--perturb", type=float, default=0.2,
                           help="node perturbation as a fraction of h")
            p.add_argument("--metric", choices=("shape", "size", "shape+size"),
                           default="shape")
            p.add_argument("--fit", action="store_true", help="circle-fitting demo")
        if name == "hyperbolic":
            p.add_argument("--law", choices=LAWS, default="advection")
            p.add_argument("--t-final", type=_positive(float), default=1.0)
            p.add_argument("--vtk-stride", type=_nonnegative_int, default=0)
    return parser


def resolve(args):
    """Fill per-command defaults and validate mesh/dim consistency."""
    d = DEFAULTS[args.command]
    for key in ("levels", "solver", "tol"):
        if getattr(args, key) is None and key in d:
            setattr(args, key, d[key])
    dim = args.dim
    if args.mesh:
        try:
            counts = tuple(parse_int_list(args.mesh))
        except ValueError as exc:
            raise CLIError("InvalidMesh", str(exc)) from None
        if dim is not None and len(counts) != dim:
            raise CLIError("InvalidMesh", f"--mesh has {len(counts)} counts but --dim is {dim}")
    else:
        counts = (d["mesh"],) * (dim or 2)
    if len(counts) not in (2, 3):
        raise CLIError("InvalidMesh", "mesh must be 2D or 3D")
    if args.command in ("tmop", "hyperbolic") and len(counts) != 2:
        raise CLIError("InvalidMesh", f"{args.command} runs on 2D meshes only")
    args.counts = counts
    try:
        args.orders = parse_int_list(args.order or d["order"])
    except ValueError as exc:
        raise CLIError("UsageError", str(exc)) from None
    return args


def _emit(args, header, rows):
    if args.out:
        write_csv(args.out, header, rows)
    else:
        write_csv(sys.stdout, header, rows)


def cmd_bp(args):
    iters = args.max_iter or (1000 if args.tol else 100)
    rows = bm.run_bp(args.command, args.counts, args.orders, q=args.quad,
                     iterations=iters, tol=args.tol)
    _emit(args, bm.BP_HEADER, rows)
    if args.tol:
        return [f"p={r['p']} reached rel_res {r['rel_res']:.3e}" for r in rows
                if not r["converged"]]
    return []


def cmd_converge(args):
    failures = []
    allrows = []
    for p in args.orders:
        rows = bm.run_converge(p, args.counts, args.levels, args.solver, args.tol,
                               args.max_iter or 2000, args.exact)
        failures += [f"p={p} level={r['level']} did not converge" for r in rows
                     if not r["converged"]]
        allrows += rows
    _emit(args, bm.CONVERGE_HEADER, allrows)
    return failures


def cmd_solve(args):
    rows = bm.run_solver_study([args.solver], args.orders, args.counts, args.tol,
                               args.max_iter or 1000, args.seed)
    _emit(args, bm.SOLVER_HEADER, rows)
    return [f"{r['solver']} p={r['p']} did not converge" for r in rows if not r["converged"]]


def cmd_tmop(args):
    problem, x0, x, rep = bm.run_tmop(args.counts, args.orders[0], args.perturb, args.seed,
                                      args.metric, args.fit, args.tol or 1e-10,
                                      args.max_iter or 50)
    _emit(args, bm.TMOP_HEADER, rep.history)
    if args.vtk:
        order = problem.mesh.geom_order
        write_vtk(f"{args.vtk}_initial.vtk", problem.mesh.with_nodes(x0.reshape(-1, 2)), order)
        write_vtk(f"{args.vtk}_final.vtk", problem.mesh.with_nodes(x.reshape(-1, 2)), order)
    return [] if rep.converged else [f"Newton stopped after {rep.iterations} iterations"]


def cmd_hyperbolic(args):
    from .io import write_vtk_dg

    state, rows, _ = bm.run_hyperbolic(args.law, args.counts, args.orders[0], args.cfl,
                                       args.t_final, args.vtk, args.vtk_stride)
    _emit(args, bm.hyperbolic_header(state.law.num_components), rows)
    if args.vtk:
        write_vtk_dg(f"{args.vtk}_final.vtk", state.fes, state.u)
    return []


COMMANDS = {"bp1": cmd_bp, "bp3": cmd_bp, "converge": cmd_converge, "solve": cmd_solve,
            "tmop": cmd_tmop, "hyperbolic": cmd_hyperbolic}


def _error_line(kind, message):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def main(argv=None):
    try:
        args = resolve(build_parser().parse_args(argv))
        failures = COMMANDS[args.command](args)
    except CLIError as exc:
        _error_line(exc.kind, str(exc))
        return 2
    except (ArithmeticError, ValueError) as exc:
        _error_line(type(exc).__name__, str(exc))
        return 1
    if failures:
        _error_line("NotConverged", "; ".join(failures))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
