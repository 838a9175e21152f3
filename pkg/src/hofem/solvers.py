"""Krylov solver and matrix-free preconditioners.

Everything here works on callables ``apply_A(x) -> y`` so partially assembled
operators, sparse matrices and dense arrays can be mixed freely.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .basis import gll_nodes, lagrange_eval
from .fespace import FESpace, boundary_dofs
from .mesh import lor_refine
from .operators import PAOperator
from .rng import SplitMix64
from .tensor import tensor_apply

CHEB_LOWER_FRACTION = 30.0
CHEB_SAFETY = 1.1


class IndefiniteError(ArithmeticError):
    """CG met a direction with non-positive curvature."""


@dataclass
class IterStats:
    iterations: int = 0
    rel_res: float = 0.0
    converged: bool = False
    history: list = field(default_factory=list)
    initial_residual: float = 0.0

    CSV_HEADER = ("solver", "p", "elements", "dofs", "iterations", "rel_res", "seconds")

    def csv_row(self, solver, p, elements, dofs, seconds):
        return [solver, p, elements, dofs, self.iterations, self.rel_res, seconds]


def as_operator(A):
    """Wrap a matrix-like object as a callable."""
    if callable(A) and not hasattr(A, "shape") or isinstance(A, PAOperator):
        return A
    return lambda x: A @ x


def cg(apply_A, b, apply_M=None, x0=None, rel_tol=1e-8, max_iter=1000, restart=False):
    """Preconditioned conjugate gradients.

    Convergence is declared when ``||r||_M / ||r_0||_M <= rel_tol`` where
    ``||r||_M = sqrt(r . M r)``. ``history`` records that norm after every
    iteration, so ``len(history) == iterations``.

    With ``restart=True`` (fixed-iteration benchmarking, ``rel_tol=0``) an
    exactly vanishing recursive residual restarts the iteration from the true
    residual ``b - A x`` instead of stopping, so ``max_iter`` iterations run
    unless the true residual is also zero.

    Returns
    -------
    x : ndarray
    stats : IterStats
    """
    A = as_operator(apply_A)
    M = as_operator(apply_M) if apply_M is not None else (lambda r: r.copy())
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A(x)
    z = M(r)
    rz = float(r @ z)
    if rz < 0.0:
        raise IndefiniteError("preconditioner is not positive definite")
    nrm0 = np.sqrt(rz)
    stats = IterStats(initial_residual=nrm0)
    if nrm0 == 0.0:
        stats.converged = True
        return x, stats
    p = z.copy()
    for it in range(1, max_iter + 1):
        Ap = A(p)
        pAp = float(p @ Ap)
        if not pAp > 0.0:
            raise IndefiniteError(f"p^T A p = {pAp:.3e} <= 0 at iteration {it}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = M(r)
        rz_new = float(r @ z)
        if restart and rz_new <= 0.0 and it < max_iter:
            r = b - A(x)
            z = M(r)
            rz_new = float(r @ z)
            if rz_new > 0.0:
                stats.history.append(np.sqrt(rz_new) / nrm0)
                stats.iterations = it
                stats.rel_res = stats.history[-1]
                p = z.copy()
                rz = rz_new
                continue
        nrm = np.sqrt(max(rz_new, 0.0))
        stats.history.append(nrm / nrm0)
        stats.iterations = it
        stats.rel_res = nrm / nrm0
        if nrm <= rel_tol * nrm0:
            stats.converged = True
            break
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, stats


def jacobi_preconditioner(diag):
    diag = np.asarray(diag, dtype=float)
    if np.any(diag <= 0.0):
        raise ValueError("Jacobi needs a positive diagonal")
    inv = 1.0 / diag
    return lambda r: inv * r


def power_method_lmax(apply_A, diag, iters=20, seed=0):
    """Estimate the largest eigenvalue of ``D^{-1} A`` by power iteration.

    The start vector comes from :class:`SplitMix64` with ``seed``; the result is
    the Rayleigh quotient ``v.Av / v.Dv`` of the final iterate.
    """
    A = as_operator(apply_A)
    diag = np.asarray(diag, dtype=float)
    v = SplitMix64(seed).uniform(-1.0, 1.0, diag.shape)
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = A(v) / diag
        v = w / np.linalg.norm(w)
    Av = A(v)
    return float(v @ Av) / float(v @ (diag * v))


def chebyshev_smooth(apply_A, diag, lambda_max_est, order, b, x):
    """Degree-``order`` Chebyshev polynomial smoothing in ``D^{-1} A``.

    The target interval is ``[lmax / 30, lmax]`` with ``lmax = 1.1 *
    lambda_max_est``. Uses the three-term fixed-point recurrence, so no inner
    products are taken. Returns the updated iterate (``x`` is not modified).
    """
    A = as_operator(apply_A)
    diag = np.asarray(diag, dtype=float)
    if np.any(diag <= 0.0):
        raise ValueError("Chebyshev smoothing needs a positive diagonal")
    if order < 1:
        raise ValueError("order must be >= 1")
    lmax = CHEB_SAFETY * lambda_max_est
    lmin = lmax / CHEB_LOWER_FRACTION
    theta = 0.5 * (lmax + lmin)
    delta = 0.5 * (lmax - lmin)
    sigma = theta / delta
    rho = 1.0 / sigma
    x = np.array(x, dtype=float)
    r = (b - A(x)) / diag
    d = r / theta
    x += d
    for _ in range(1, order):
        rho_new = 1.0 / (2.0 * sigma - rho)
        r = (b - A(x)) / diag
        d = rho_new * rho * d + (2.0 * rho_new / delta) * r
        x += d
        rho = rho_new
    return x


def chebyshev_bound(order, lower_fraction=CHEB_LOWER_FRACTION):
    """``1 / T_order(sigma)``: worst error factor over the smoothing interval."""
    sigma = (lower_fraction + 1.0) / (lower_fraction - 1.0)
    return 1.0 / np.cosh(order * np.arccosh(sigma))


class ChebyshevSmoother:
    def __init__(self, op, order=2, power_iters=20, seed=0):
        self.op = op
        self.order = order
        self.diag = op.diagonal()
        self.lmax = power_method_lmax(op, self.diag, power_iters, seed)

    def __call__(self, b, x):
        return chebyshev_smooth(self.op, self.diag, self.lmax, self.order, b, x)


def direct_solver(A):
    """Exact sparse LU factorization; returns ``solve(r) -> z``."""
    lu = spla.splu(A.tocsc())
    return lu.solve


# p-multigrid -----------------------------------------------------------------

class Prolongation:
    """Nodal interpolation between H1 spaces of two degrees on one mesh.

    Shared dofs receive the multiplicity-weighted average of the element
    values, which are all equal for continuous input. ``mult_transpose`` is
    the exact transpose of ``mult``.
    """

    def __init__(self, coarse, fine):
        self.coarse, self.fine = coarse, fine
        self.I1 = lagrange_eval(gll_nodes(coarse.p), gll_nodes(fine.p))
        self.inv_mult = 1.0 / fine.multiplicity()
        self.dim = fine.dim

    def _e(self, fes, v):
        ne = fes.num_elements
        return fes.gather_e(v).reshape((ne,) + (fes.p + 1,) * self.dim)

    def mult(self, xc):
        ue = tensor_apply([self.I1] * self.dim, self._e(self.coarse, xc))
        ue = ue.reshape(self.fine.num_elements, -1)
        return self.fine.scatter_e_transpose(ue) * self.inv_mult

    def mult_transpose(self, yf):
        ue = tensor_apply([self.I1.T] * self.dim, self._e(self.fine, yf * self.inv_mult))
        return self.coarse.scatter_e_transpose(ue.reshape(self.coarse.num_elements, -1))


def halving_degrees(p):
    """Degree schedule p, ceil(p/2), ..., 1, returned coarsest first."""
    out = [p]
    while out[-1] > 1:
        out.append((out[-1] + 1) // 2)
    return out[::-1]


def essential_attrs_of(op):
    """Boundary attributes whose dofs are all essential in ``op``."""
    if op.essential_dofs.size == 0:
        return []
    ess = set(op.essential_dofs.tolist())
    return [a for a in op.fes.mesh.boundary_attrs
            if set(boundary_dofs(op.fes, [a]).tolist()) <= ess]


class PMGHierarchy:
    """Polynomial multigrid on a fixed mesh, finest level last.

    Parameters
    ----------
    op : PAOperator
        Fine-level operator (scalar H1).
    degrees : sequence of int, optional
        Increasing degrees ending in ``op.fes.p``; halving schedule by default.
    cheb_order, sweeps : int
        Chebyshev degree and number of pre/post smoothing applications.
    coarse_solver : callable, optional
        ``factory(csr_matrix) -> solve``; sparse LU by default.
    """

    def __init__(self, op, degrees=None, cheb_order=2, sweeps=2, coarse_solver=None,
                 power_iters=20):
        degrees = list(degrees) if degrees is not None else halving_degrees(op.fes.p)
        if len(degrees) < 2:
            raise ValueError("p-multigrid needs at least two levels")
        if degrees[-1] != op.fes.p or any(a >= b for a, b in zip(degrees, degrees[1:])):
            raise ValueError(f"bad degree schedule {degrees} for p={op.fes.p}")
        self.degrees = degrees
        self.sweeps = sweeps
        attrs = essential_attrs_of(op)
        mesh = op.fes.mesh
        self.ops = []
        for p in degrees[:-1]:
            fes = FESpace(mesh, p)
            ess = boundary_dofs(fes, attrs) if attrs else None
            self.ops.append(PAOperator(fes, op.kind, op.coefficient, essential_dofs=ess))
        self.ops.append(op)
        self.transfers = [Prolongation(a.fes, b.fes) for a, b in zip(self.ops, self.ops[1:])]
        self.smoothers = [None] + [ChebyshevSmoother(o, cheb_order, power_iters)
                                   for o in self.ops[1:]]
        factory = coarse_solver or direct_solver
        self.coarse_solve = factory(self.ops[0].assemble())

    @property
    def num_levels(self):
        return len(self.ops)

    def vcycle(self, b, x=None, level=None):
        if level is None:
            level = self.num_levels - 1
        if level == 0:
            return self.coarse_solve(b)
        op = self.ops[level]
        x = np.zeros_like(b) if x is None else np.array(x, dtype=float)
        for _ in range(self.sweeps):
            x = self.smoothers[level](b, x)
        r = b - op.mult(x)
        P = self.transfers[level - 1]
        rc = P.mult_transpose(r)
        rc[self.ops[level - 1].essential_dofs] = 0.0
        ec = self.vcycle(rc, None, level - 1)
        corr = P.mult(ec)
        corr[op.essential_dofs] = 0.0
        x += corr
        for _ in range(self.sweeps):
            x = self.smoothers[level](b, x)
        return x

    def __call__(self, r):
        return self.vcycle(r)


def pmg_vcycle(hierarchy, b, x):
    return hierarchy.vcycle(b, x)


# low-order-refined preconditioning --------------------------------------------

class LORPreconditioner:
    """Degree-1 discretization on the GLL-refined mesh, solved exactly.

    The LOR vertex lattice and the high-order node lattice coincide, so the
    dof bijection is read off the two lattice numberings.
    """

    def __init__(self, ho_op, inner_solver=None):
        fes = ho_op.fes
        if fes.continuity != "H1" or fes.vdim != 1:
            raise ValueError("LOR preconditioning needs a scalar H1 operator")
        self.ho_op = ho_op
        self.mesh = lor_refine(fes.mesh, fes.p)
        self.fes = FESpace(self.mesh, 1)
        perm = np.empty(fes.ndofs, dtype=int)
        perm[fes.lattice_to_dof] = self.fes.lattice_to_dof
        self.perm = perm
        ess = perm[ho_op.essential_dofs] if ho_op.essential_dofs.size else None
        self.op = PAOperator(self.fes, ho_op.kind, ho_op.coefficient, essential_dofs=ess)
        self.matrix = self.op.assemble()
        self.solve = (inner_solver or direct_solver)(self.matrix)

    def apply(self, r):
        rl = np.empty_like(r)
        rl[self.perm] = r
        return self.solve(rl)[self.perm]

    __call__ = apply

    def lor_matvec(self, x):
        """The LOR operator in high-order dof numbering."""
        xl = np.empty_like(x)
        xl[self.perm] = x
        return (self.matrix @ xl)[self.perm]


def lor_build(ho_op, inner_solver=None):
    return LORPreconditioner(ho_op, inner_solver)


def lor_apply(P, r):
    return P.apply(r)


def make_preconditioner(name, op):
    """Preconditioner callable by name: none, jacobi, chebyshev, lor, pmg."""
    if name in (None, "none"):
        return None
    if name == "jacobi":
        return jacobi_preconditioner(op.diagonal())
    if name == "chebyshev":
        smoother = ChebyshevSmoother(op, order=2)
        return lambda r: smoother(r, np.zeros_like(r))
    if name == "lor":
        return LORPreconditioner(op)
    if name == "pmg":
        if len(halving_degrees(op.fes.p)) < 2:
            # a single level: the V-cycle degenerates to the coarse solve
            return direct_solver(op.assemble())
        return PMGHierarchy(op)
    raise ValueError(f"unknown preconditioner {name!r}")
