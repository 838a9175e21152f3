"""Acceptance suite: nine criteria at their stated tolerances.

Each criterion is a ``measure_*`` function returning ``(checks, values)``.
``checks`` maps a short label to a bool and ``values`` holds every
deterministic number the checks were computed from; the determinism criterion
reruns every measurement and compares those values bit for bit. One
``PASS``/``FAIL`` line per criterion is printed to the terminal.
"""

import csv
import io
import math
import time

import numpy as np
import pytest

from hofem import benchmarks as bm
from hofem.cli import main
from hofem.fespace import FESpace, boundary_dofs
from hofem.hyperbolic import (DGState, LinearAdvection, ShallowWater, rusanov_flux,
                              ssp_rk3_step, stable_dt)
from hofem.mesh import make_cartesian_mesh, perturb_mesh, transform_mesh
from hofem.operators import (DIFFUSION, MASS, PAOperator, element_apply, element_assemble,
                             full_assemble, pa_apply, pa_diagonal)
from hofem.rng import SplitMix64, random_vector
from hofem.tmop import SHAPE, TmopProblem, circle_fitting_problem, tmop_newton_solve

_results = {}


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def _curved(dim, n):
    m = make_cartesian_mesh(dim, (n,) * dim, 2)

    def bend(X):
        return X + 0.04 * np.sin(np.pi * X[:, ::-1]) * np.prod(np.sin(np.pi * X), 1)[:, None]
    return perturb_mesh(transform_mesh(m, bend), 0.02 / n, seed=3)


def _assembly_sweep():
    for dim in (2, 3):
        for p in (1, 2, 3, 4):
            yield dim, p, make_cartesian_mesh(dim, (4,) * dim, 1), False
    for p in (1, 2, 3, 4):
        yield 2, p, _curved(2, 4), p == 2
    yield 3, 2, _curved(3, 2), True


# 1 and 2 ---------------------------------------------------------------------------

def measure_assembly_levels():
    errs = []
    for kind in (MASS, DIFFUSION):
        for dim, p, mesh, bc in _assembly_sweep():
            fes = FESpace(mesh, p)
            op = PAOperator(fes, kind, coefficient=lambda X: 1 + X[:, 0] ** 2,
                            essential_dofs=boundary_dofs(fes) if bc else None)
            A, Ae = full_assemble(op), element_assemble(op)
            for s in range(10):
                x = random_vector(op.size, s)
                pa, ea, fa = pa_apply(op, x), element_apply(op, Ae, x), A @ x
                errs += [_rel(pa, ea), _rel(pa, fa), _rel(ea, fa)]
    worst = max(errs)
    return {"pairwise relative error <= 1e-12": worst <= 1e-12}, {"worst": worst,
                                                                   "all": errs}


def measure_diagonal():
    errs = []
    for kind in (MASS, DIFFUSION):
        for dim, p, mesh, bc in _assembly_sweep():
            fes = FESpace(mesh, p)
            op = PAOperator(fes, kind, coefficient=lambda X: 1 + X[:, 0] ** 2,
                            essential_dofs=boundary_dofs(fes) if bc else None)
            errs.append(_rel(pa_diagonal(op), full_assemble(op).diagonal()))
    worst = max(errs)
    return {"diagonal relative error <= 1e-13": worst <= 1e-13}, {"worst": worst, "all": errs}


# 3 to 5 ----------------------------------------------------------------------------

def measure_convergence():
    checks, values = {}, {}
    for p in (1, 2, 3):
        rows = bm.run_converge(p, (4, 4), levels=3, solver="lor", rel_tol=1e-12)
        rates = [r["rate"] for r in rows[1:]]
        values[f"p{p}"] = [r["l2_error"] for r in rows]
        checks[f"p={p} rates >= {p + 0.9}"] = (len(rates) == 3 and all(r["converged"] for r in rows)
                                              and min(rates) >= p + 0.9)
    return checks, values


def measure_lor():
    its = {r["p"]: r["iterations"] for r in
           bm.run_solver_study(["lor"], [1, 2, 3, 4, 6, 8], (4, 4), rel_tol=1e-8)}
    mesh_its = [bm.run_solver_study(["lor"], [3], (n, n), rel_tol=1e-8)[0]["iterations"]
                for n in (4, 8, 16)]
    checks = {
        "iterations <= 35 for p in 1,2,3,4,6,8": max(its.values()) <= 35,
        "iterations(p=8) <= 2 iterations(p=2)": its[8] <= 2 * its[2],
        "p=3 counts on 4x4/8x8/16x16 within 5": max(mesh_its) - min(mesh_its) <= 5,
    }
    return checks, {"by_order": its, "by_mesh": mesh_its}


def measure_pmg():
    row = bm.run_solver_study(["pmg"], [4], (8, 8), rel_tol=1e-8)[0]
    ok = row["converged"] and row["rel_res"] <= 1e-8 and row["iterations"] <= 25
    return {"p=4 8x8 reaches 1e-8 in <= 25 iterations": ok}, {
        "iterations": row["iterations"], "rel_res": row["rel_res"]}


# 6 ---------------------------------------------------------------------------------

def _fd_error(problem, x, h):
    g = problem.gradient(x) * problem.free
    fd = np.zeros_like(g)
    for i in np.nonzero(problem.free)[0]:
        e = np.zeros_like(x)
        e[i] = h
        fd[i] = (problem.objective(x + e) - problem.objective(x - e)) / (2 * h)
    return float(np.abs(g - fd).max() / np.abs(g).max())


def measure_tmop():
    mesh3 = make_cartesian_mesh(2, (3, 3), 2)
    x3 = perturb_mesh(mesh3, 0.1 / 3, seed=7).nodes.ravel().copy()
    fd = _fd_error(TmopProblem(mesh3, SHAPE), x3, 1e-6 / 3)

    mesh = make_cartesian_mesh(2, (4, 4), 1)
    problem = TmopProblem(mesh, SHAPE)
    dets = []
    objective = problem.objective

    def recording(x):
        val = objective(x)
        dets.append(problem.min_det(x))
        return val
    problem.objective = recording
    x0 = perturb_mesh(mesh, 0.2 / 4, seed=42).nodes.ravel().copy()
    x, rep = tmop_newton_solve(problem, x0)
    node_err = float(np.abs(x - problem.x0).max())

    fit = circle_fitting_problem(n=8, radius=0.3, weight=1e4)
    xf, rep_f = tmop_newton_solve(fit, max_iter=30)
    sigma = float(np.abs(fit.fitting.evaluate(xf.reshape(-1, 2)[fit.fitting.nodes])).max())

    checks = {
        "(a) gradient vs central FD <= 1e-5": fd <= 1e-5,
        "(b) F <= 1e-16": rep.converged and rep.objective <= 1e-16,
        "(b) node error <= 1e-8": node_err <= 1e-8,
        "(b) no inverted iterate": min(dets) > 0,
        "(c) max|sigma| <= 5e-3 in <= 30 iterations": sigma <= 5e-3 and rep_f.iterations <= 30,
    }
    return checks, {"fd": fd, "F": rep.objective, "node_err": node_err, "dets": dets,
                    "sigma": sigma, "fit_iters": rep_f.iterations, "x": x, "xf": xf}


# 7 ---------------------------------------------------------------------------------

def _wave(X):
    return (np.sin(2 * np.pi * X[:, 0]) * np.sin(2 * np.pi * X[:, 1]))[:, None]


def _periodic(n, order=1):
    return make_cartesian_mesh(2, (n, n), order, periodic=(True, True))


def measure_hyperbolic():
    g = SplitMix64(2024)
    ang = g.uniform(0, 2 * np.pi, (500,))
    n = np.stack([np.cos(ang), np.sin(ang)], -1)
    h = g.uniform(0.5, 2.0, (500,))
    sw = np.stack([h, h * g.uniform(-1, 1, (500,)), h * g.uniform(-1, 1, (500,))], -1)
    sw2 = np.stack([h[::-1], sw[::-1, 1], sw[::-1, 2]], -1)
    scalars = g.normal((500, 1))
    cons, anti = 0.0, 0.0
    for law, a, b in [(LinearAdvection((0.7, -1.3)), scalars, scalars[::-1]),
                      (ShallowWater(), sw, sw2)]:
        Fn = np.einsum("kcd,kd->kc", law.flux(a), n)
        cons = max(cons, float(np.abs(rusanov_flux(law, n, a, a) - Fn).max()))
        anti = max(anti, float(np.abs(rusanov_flux(law, n, a, b)
                                      + rusanov_flux(law, -n, b, a)).max()))

    law = LinearAdvection((1.0, 0.5))
    st = DGState(law, perturb_mesh(_periodic(6, 2), 0.02, seed=1), 3)
    st.u = st.project(lambda X: 1 + _wave(X))
    m0, scale = st.total_mass(), st.l1_norm()
    dt = stable_dt(law, st, 0.3)
    for _ in range(100):
        ssp_rk3_step(law, st, dt)
    drift = float((np.abs(st.total_mass() - m0) / scale).max())

    rates = {}
    adv = LinearAdvection((1.0, 0.0))
    for p in (2, 3):
        errs = []
        for n_el in (4, 8, 16):
            s = DGState(adv, _periodic(n_el), p)
            s.u = s.project(_wave)
            N = math.ceil(1.0 / stable_dt(adv, s, 0.25))
            for _ in range(N):
                ssp_rk3_step(adv, s, 1.0 / N)
            errs.append(s.l2_error(_wave))
        rates[p] = [float(np.log2(a / b)) for a, b in zip(errs, errs[1:])]

    swl = ShallowWater()
    lake = DGState(swl, perturb_mesh(_periodic(4, 2), 0.02, seed=3), 3)
    lake.u = lake.project(lambda X: np.tile([2.0, 0.0, 0.0], (len(X), 1)))
    u0 = lake.u.copy()
    lake_err = 0.0
    dt = stable_dt(swl, lake, 0.5)
    for _ in range(10):
        before = lake.u.copy()
        ssp_rk3_step(swl, lake, dt)
        lake_err = max(lake_err, float(np.abs(lake.u - before).max()))
    checks = {
        "Rusanov consistency <= 1e-14": cons <= 1e-14,
        "flux antisymmetry <= 1e-14": anti <= 1e-14,
        "mass drift over 100 steps <= 1e-11": drift <= 1e-11,
        "one-period rates >= p + 1/2": all(min(r) >= p + 0.5 for p, r in rates.items()),
        "lake at rest <= 1e-12 per step": lake_err <= 1e-12,
    }
    return checks, {"cons": cons, "anti": anti, "drift": drift, "rates": rates,
                    "lake": lake_err, "lake_u": lake.u - u0}


# 8 ---------------------------------------------------------------------------------

def _cli_rows(argv):
    import contextlib

    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(argv)
    return code, list(csv.reader(io.StringIO(buf.getvalue())))


def measure_harness():
    checks, values = {}, {}
    for kind in ("bp1", "bp3"):
        argv = [kind, "--mesh", "8,8", "--order", "1-8", "--seed", "42", "--deterministic"]
        runs = [_cli_rows(argv) for _ in range(2)]
        header = runs[0][1][0]
        keep = [k for k, c in enumerate(header) if c not in ("seconds", "throughput")]
        stripped = [[[r[k] for k in keep] for r in rows] for _, rows in runs]
        dofs = [int(r[header.index("dofs")]) for r in runs[0][1][1:]]
        checks[f"{kind} header"] = header == list(bm.BP_HEADER)
        checks[f"{kind} exit status 0"] = all(code == 0 for code, _ in runs)
        checks[f"{kind} dofs == (8p+1)^2"] = dofs == [(8 * p + 1) ** 2 for p in range(1, 9)]
        checks[f"{kind} reruns identical"] = stripped[0] == stripped[1]
        values[kind] = stripped[0]
    return checks, values


MEASURES = [
    (1, "assembly-level equivalence", measure_assembly_levels, 30),
    (2, "matrix-free diagonal", measure_diagonal, 10),
    (3, "discretization convergence", measure_convergence, 30),
    (4, "LOR preconditioning", measure_lor, 60),
    (5, "p-multigrid", measure_pmg, 20),
    (6, "TMOP correctness", measure_tmop, 60),
    (7, "hyperbolic DG", measure_hyperbolic, 60),
    (8, "benchmark harness", measure_harness, 60),
]


@pytest.fixture
def report(capsys):
    def emit(number, name, checks, seconds, budget):
        ok = all(checks.values())
        failed = [k for k, v in checks.items() if not v]
        limit = f" of {budget}s" if budget else ""
        line = f"criterion {number} {name}: {'PASS' if ok else 'FAIL'} ({seconds:.1f}s{limit})"
        if failed:
            line += " failed: " + "; ".join(failed)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return emit


@pytest.mark.parametrize("number,name,measure,budget", MEASURES,
                         ids=[f"c{m[0]}" for m in MEASURES])
def test_criterion(number, name, measure, budget, report):
    t0 = time.perf_counter()
    checks, values = measure()
    seconds = time.perf_counter() - t0
    checks[f"runtime <= {budget}s"] = seconds <= budget
    _results[number] = values
    assert report(number, name, checks, seconds, budget), checks


def _identical(a, b):
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(_identical(a[k], b[k]) for k in a)
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(_identical(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
    return type(a) is type(b) and (a == b or (a != a and b != b))


def test_criterion_9_determinism(report):
    t0 = time.perf_counter()
    checks = {}
    for number, name, measure, _ in MEASURES:
        first = _results.get(number)
        if first is None:
            first = measure()[1]
        checks[f"criterion {number} bit-identical"] = _identical(first, measure()[1])
    seconds = time.perf_counter() - t0
    assert report(9, "determinism", checks, seconds, None), checks
