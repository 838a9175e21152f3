"""Preconditioning high-order Poisson problems.

Unpreconditioned and Jacobi-preconditioned CG need more iterations as p
grows. Two preconditioners avoid this. LOR is a degree-1 discretization on
the mesh refined at the Gauss-Lobatto points. p-multigrid is a V-cycle over
polynomial degrees with Chebyshev smoothing.
"""

from hofem.benchmarks import run_solver_study

orders = [1, 2, 3, 4, 6, 8]
solvers = ["none", "jacobi", "chebyshev", "lor", "pmg"]
rows = run_solver_study(solvers, orders, counts=(4, 4), rel_tol=1e-8, max_iter=2000, seed=0)
table = {(r["solver"], r["p"]): r["iterations"] for r in rows}

print("CG iterations to 1e-8, 2D Poisson on a 4x4 mesh")
print(f"{'solver':>10}" + "".join(f"{'p=' + str(p):>7}" for p in orders))
for s in solvers:
    print(f"{s:>10}" + "".join(f"{table[s, p]:>7}" for p in orders))

print("\nLOR at p=3 under mesh refinement:")
for n in (4, 8, 16, 32):
    r = run_solver_study(["lor"], [3], counts=(n, n), rel_tol=1e-8)[0]
    print(f"  {n:>2}x{n:<2} dofs={r['dofs']:>6} iterations={r['iterations']}")
