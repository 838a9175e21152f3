"""Drivers for the benchmark, convergence and demonstration runs.

Each ``run_*`` function returns plain rows (dicts) so the command line and
the tests share one code path. Timing columns are the only non-deterministic
outputs.
"""

import time

import numpy as np

from .fespace import FESpace, boundary_dofs
from .mesh import make_cartesian_mesh, perturb_mesh, refine_uniform
from .operators import DIFFUSION, MASS, PAOperator, assemble_rhs, eliminate_bc, l2_error
from .rng import random_vector
from .solvers import cg, make_preconditioner

BP_HEADER = ("benchmark", "p", "q", "elements", "dofs", "iterations", "seconds", "throughput")
CONVERGE_HEADER = ("level", "h", "dofs", "l2_error", "rate", "iterations")
SOLVER_HEADER = ("solver", "p", "elements", "dofs", "iterations", "rel_res", "seconds")
TMOP_HEADER = ("iter", "objective", "grad_inf", "step")
EXACT_TOL = 1e-12


def sine_solution(dim):
    """u = prod sin(pi x_i) and its forcing -lap u = dim pi^2 u."""
    def u(X):
        return np.prod(np.sin(np.pi * X), axis=1)

    def f(X):
        return dim * np.pi ** 2 * u(X)

    return u, f


def linear_solution():
    return (lambda X: X[:, 0]), (lambda X: np.zeros(len(X)))


def solve_poisson(mesh, p, solver="lor", rel_tol=1e-12, max_iter=1000, exact="sine", q=None):
    """Dirichlet Poisson problem with a manufactured solution.

    Returns ``(fes, u, stats, err)`` with ``err`` the L2 error.
    """
    u_ex, f = sine_solution(mesh.dim) if exact == "sine" else linear_solution()
    fes = FESpace(mesh, p)
    ess = boundary_dofs(fes)
    op = PAOperator(fes, DIFFUSION, q=q, essential_dofs=ess)
    x_bc = fes.interpolate(u_ex)
    b = eliminate_bc(op, ess, x_bc, assemble_rhs(fes, f, q))
    M = make_preconditioner(solver, op)
    x0 = np.zeros(fes.vsize)
    x0[ess] = x_bc[ess]
    u, stats = cg(op, b, M, x0=x0, rel_tol=rel_tol, max_iter=max_iter)
    return fes, u, stats, l2_error(fes, u, u_ex)


def run_bp(kind, counts, orders, q=None, iterations=100, tol=None, dim=None):
    """CEED-style bake-off runs: BP1 (mass) or BP3 (diffusion).

    Unpreconditioned CG runs for exactly ``iterations`` steps unless ``tol`` is
    given, in which case it stops at that relative residual. Throughput is
    dofs * iterations / seconds on a single process.
    """
    if kind not in ("bp1", "bp3"):
        raise ValueError(f"unknown benchmark {kind!r}")
    dim = dim or len(counts)
    rows = []
    for p in orders:
        mesh = make_cartesian_mesh(dim, counts, 1)
        fes = FESpace(mesh, p)
        u_ex, f = sine_solution(dim)
        qq = q or p + 2
        if kind == "bp1":
            op = PAOperator(fes, MASS, q=qq)
            b = assemble_rhs(fes, u_ex, qq)
            x0 = np.zeros(fes.vsize)
        else:
            ess = boundary_dofs(fes)
            op = PAOperator(fes, DIFFUSION, q=qq, essential_dofs=ess)
            x_bc = fes.interpolate(u_ex)
            b = eliminate_bc(op, ess, x_bc, assemble_rhs(fes, f, qq))
            x0 = np.zeros(fes.vsize)
            x0[ess] = x_bc[ess]
        t0 = time.perf_counter()
        if tol is None:
            x, stats = cg(op, b, None, x0=x0, rel_tol=0.0, max_iter=iterations, restart=True)
        else:
            x, stats = cg(op, b, None, x0=x0, rel_tol=tol, max_iter=iterations)
        seconds = time.perf_counter() - t0
        its = stats.iterations
        rows.append({
            "benchmark": kind, "p": p, "q": qq, "elements": mesh.num_elements,
            "dofs": fes.vsize, "iterations": its, "seconds": seconds,
            "throughput": fes.vsize * its / seconds if seconds > 0 else 0.0,
            "l2_error": l2_error(fes, x, u_ex), "converged": stats.converged,
            "rel_res": stats.rel_res,
        })
    return rows


def run_converge(p, counts=(4, 4), levels=3, solver="lor", rel_tol=1e-12, max_iter=2000,
                 exact="sine"):
    """Poisson solves over ``levels`` uniform refinements of a ``counts`` mesh.

    ``levels`` counts refinements, so ``levels + 1`` meshes are solved. The
    rate column is log2 of successive error ratios, ``exact`` when both
    errors are below 1e-12, and empty on the first row.
    """
    mesh = make_cartesian_mesh(len(counts), counts, 1)
    rows, prev = [], None
    for level in range(levels + 1):
        if level:
            mesh = refine_uniform(mesh)
        fes, u, stats, err = solve_poisson(mesh, p, solver, rel_tol, max_iter, exact)
        if prev is None:
            rate = ""
        elif err <= EXACT_TOL and prev <= EXACT_TOL:
            rate = "exact"
        else:
            rate = float(np.log2(prev / err))
        rows.append({"level": level, "h": 1.0 / mesh.counts[0], "dofs": fes.vsize,
                     "l2_error": err, "rate": rate, "iterations": stats.iterations,
                     "converged": stats.converged})
        prev = err
    return rows


def run_solver_study(solvers, orders, counts=(4, 4), rel_tol=1e-8, max_iter=1000, seed=0):
    """Preconditioned CG on 2D/3D Poisson with a seeded random right-hand side."""
    rows = []
    mesh = make_cartesian_mesh(len(counts), counts, 1)
    for p in orders:
        fes = FESpace(mesh, p)
        ess = boundary_dofs(fes)
        op = PAOperator(fes, DIFFUSION, essential_dofs=ess)
        b = random_vector(fes.vsize, seed)
        b[ess] = 0.0
        for name in solvers:
            t0 = time.perf_counter()
            M = make_preconditioner(name, op)
            _, stats = cg(op, b, M, rel_tol=rel_tol, max_iter=max_iter)
            seconds = time.perf_counter() - t0
            row = dict(zip(SOLVER_HEADER, stats.csv_row(name, p, mesh.num_elements,
                                                          fes.vsize, seconds)))
            row["converged"] = stats.converged
            rows.append(row)
    return rows


def run_tmop(counts=(4, 4), order=1, perturbation=0.2, seed=42, metric="shape",
             fit=False, tol=1e-10, max_iter=50):
    """Mesh-optimization demo.

    Without ``fit``: interior nodes of a uniform mesh are perturbed by up to
    ``perturbation * h`` and Newton restores the uniform mesh. With ``fit``:
    the circle-fitting problem on a ``counts`` background mesh.

    Returns ``(problem, x_initial, x_final, report)``.
    """
    from .tmop import TmopProblem, circle_fitting_problem, tmop_newton_solve

    if fit:
        problem = circle_fitting_problem(n=counts[0], geom_order=order)
        x0 = problem.x0
    else:
        mesh = make_cartesian_mesh(2, counts, order)
        problem = TmopProblem(mesh, metric)
        h = 1.0 / max(counts)
        if perturbation > 0:
            x0 = perturb_mesh(mesh, perturbation * h, seed).nodes.ravel().copy()
        else:
            x0 = problem.x0
    x, report = tmop_newton_solve(problem, x0, tol=tol, max_iter=max_iter)
    return problem, x0, x, report


def hyperbolic_header(m):
    return ("step", "t", "dt") + tuple(f"mass_{c}" for c in range(m)) + ("l2_norm",)


def run_hyperbolic(law="advection", counts=(16, 16), p=3, cfl=0.25, t_final=1.0,
                   vtk=None, vtk_stride=0, velocity=(1.0, 0.0), gravity=9.81):
    """Explicit SSP-RK3 run on the periodic unit square.

    The step is shrunk so that ``ceil(t_final / dt_cfl)`` equal steps land
    exactly on ``t_final``; one row is emitted per step.

    Returns ``(state, rows, exact)`` where ``exact`` is the transported initial
    condition for advection (``None`` for shallow water).
    """
    from .hyperbolic import DGState, LinearAdvection, ShallowWater, ssp_rk3_step, stable_dt
    from .io import write_vtk_dg

    mesh = make_cartesian_mesh(2, counts, 1, periodic=(True, True))
    if law == "advection":
        cl = LinearAdvection(velocity)
        b = np.asarray(velocity, dtype=float)

        def u0(X):
            return (np.sin(2 * np.pi * X[:, 0]) * np.sin(2 * np.pi * X[:, 1]))[:, None]

        def exact(X):
            return u0(X - b * t_final)
    elif law == "shallow-water":
        cl = ShallowWater(gravity)

        def u0(X):
            r2 = np.sum((X - 0.5) ** 2, axis=1)
            h = 1.0 + 0.1 * np.exp(-r2 / 0.01)
            return np.stack([h, np.zeros_like(h), np.zeros_like(h)], -1)

        exact = None
    else:
        raise ValueError(f"unknown conservation law {law!r}")
    state = DGState(cl, mesh, p)
    state.u = state.project(u0)
    dt = stable_dt(cl, state, cfl)
    nsteps = int(np.ceil(t_final / dt))
    dt = t_final / nsteps
    rows = []
    for step in range(1, nsteps + 1):
        ssp_rk3_step(cl, state, dt)
        row = {"step": step, "t": state.t, "dt": dt}
        for c, mc in enumerate(state.total_mass()):
            row[f"mass_{c}"] = mc
        row["l2_norm"] = state.l2_norm()
        rows.append(row)
        if vtk and vtk_stride and step % vtk_stride == 0:
            write_vtk_dg(f"{vtk}_{step:06d}.vtk", state.fes, state.u)
    return state, rows, exact
