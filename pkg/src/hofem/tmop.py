"""Target-matrix mesh optimization for 2D quadrilateral meshes.

Node positions ``x`` minimize

    F(x) = sum_E int_{E_t} mu(A W^{-1}) dx_t  +  w_sigma sum_{s in S} sigma(x_s)^2

where ``A`` is the Jacobian of the reference-to-physical map, ``W`` the target
Jacobian built as size * rotation * skew * aspect, and the optional second
term pulls the nodes ``S`` onto the zero level set of a fixed scalar field.
Integrals over target elements use reference quadrature weighted by det W.
"""

from dataclasses import dataclass, field

import numpy as np

from .basis import tabulate
from .fespace import FESpace
from .mesh import InvalidMeshError, boundary_lattice_mask, geometric_factors, shape_functions
from .tensor import grad_mats, tensor_apply

SHAPE = "shape"
SIZE = "size"
SHAPE_SIZE = "shape+size"

#: weight of the size term in the balanced compound metric
BALANCED_GAMMA = 1.5


class InvertedElementError(InvalidMeshError):
    """A quadrature-point Jacobian has det <= 0; the barrier metric is infinite."""


# metrics --------------------------------------------------------------------

@dataclass(frozen=True)
class Metric:
    """Quality metric by name: ``shape``, ``size`` or ``shape+size``."""

    kind: str = SHAPE
    gamma: float = BALANCED_GAMMA

    def __post_init__(self):
        if self.kind not in (SHAPE, SIZE, SHAPE_SIZE):
            raise ValueError(f"unknown metric {self.kind!r}")


def _as_metric(metric):
    if isinstance(metric, Metric):
        return metric
    if isinstance(metric, tuple):
        return Metric(*metric)
    return Metric(metric)


def _det(T):
    return T[..., 0, 0] * T[..., 1, 1] - T[..., 0, 1] * T[..., 1, 0]


def _check_barrier(tau):
    if np.any(~(tau > 0.0)):
        raise InvertedElementError("det T <= 0: barrier metric is infinite")


def _shape(T, tau):
    # |T|^2 - 2 det T written as a sum of squares, free of cancellation
    a = T[..., 0, 0] - T[..., 1, 1]
    b = T[..., 0, 1] + T[..., 1, 0]
    return (a * a + b * b) / (2.0 * tau)


def _shape_grad(T, tau):
    a = T[..., 0, 0] - T[..., 1, 1]
    b = T[..., 0, 1] + T[..., 1, 0]
    N = a * a + b * b
    dN = 2.0 * np.stack([np.stack([a, b], -1), np.stack([b, -a], -1)], -2)
    return dN / (2.0 * tau)[..., None, None] - (N / (2.0 * tau * tau))[..., None, None] * _adj_t(T)


def _adj_t(T):
    """d(det T)/dT."""
    return np.stack([np.stack([T[..., 1, 1], -T[..., 1, 0]], -1),
                     np.stack([-T[..., 0, 1], T[..., 0, 0]], -1)], -2)


def metric_eval(metric, T):
    """mu(T) for a stack of 2x2 matrices ``T``.

    shape: |T|^2 / (2 det T) - 1; size: (det T - 1/det T)^2 / 2;
    shape+size: shape + gamma * size.
    """
    m = _as_metric(metric)
    T = np.asarray(T, dtype=float)
    tau = _det(T)
    _check_barrier(tau)
    if m.kind == SHAPE:
        return _shape(T, tau)
    size = 0.5 * (tau - 1.0 / tau) ** 2
    if m.kind == SIZE:
        return size
    return _shape(T, tau) + m.gamma * size


def metric_grad(metric, T):
    """d mu / d T, same shape as ``T``."""
    m = _as_metric(metric)
    T = np.asarray(T, dtype=float)
    tau = _det(T)
    _check_barrier(tau)
    if m.kind == SHAPE:
        return _shape_grad(T, tau)
    dsize = ((tau - 1.0 / tau) * (1.0 + 1.0 / (tau * tau)))[..., None, None] * _adj_t(T)
    if m.kind == SIZE:
        return dsize
    return _shape_grad(T, tau) + m.gamma * dsize


# targets --------------------------------------------------------------------

def rotation_matrix(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def skew_matrix(phi):
    """Unit-determinant upper-triangular shear whose columns meet at angle ``phi``."""
    return np.array([[1.0, np.cos(phi)], [0.0, np.sin(phi)]]) / np.sqrt(np.sin(phi))


def aspect_matrix(ratio):
    """diag(sqrt(r), 1/sqrt(r)); unit determinant."""
    return np.diag([np.sqrt(ratio), 1.0 / np.sqrt(ratio)])


IDEAL_UNIFORM = "ideal_uniform"
IDEAL_EQUAL_SIZE = "ideal_equal_size"
GIVEN = "given"


@dataclass(frozen=True)
class TargetSpec:
    """Target Jacobian ``W = size * R * Q * D``.

    ``kind`` picks the size: ``ideal_uniform`` uses the average element size
    (area per element, to the power 1/2), ``ideal_equal_size`` the prescribed
    ``size``, and ``given`` takes ``W`` (a 2x2 matrix, an array of per-point
    matrices or a callable of physical points) verbatim.
    """

    kind: str = IDEAL_UNIFORM
    size: float = None
    rotation: np.ndarray = None
    skew: np.ndarray = None
    aspect: np.ndarray = None
    W: object = None


def compose_target(size, rotation=None, skew=None, aspect=None):
    W = float(size) * np.eye(2)
    for M in (rotation, skew, aspect):
        if M is not None:
            W = W @ np.asarray(M, dtype=float)
    return W


def resolve_targets(mesh, spec, q):
    """Per-quadrature-point ``W``, ``W^{-1}`` and ``det W``."""
    geom = geometric_factors(mesh, q)
    ne, nq = geom.detJ.shape
    if spec.kind == GIVEN:
        W = spec.W
        if callable(W):
            W = np.asarray(W(geom.X.reshape(-1, 2))).reshape(ne, nq, 2, 2)
        W = np.broadcast_to(np.asarray(W, dtype=float), (ne, nq, 2, 2)).copy()
    else:
        if spec.kind == IDEAL_UNIFORM:
            zeta = np.sqrt(np.sum(geom.weights * geom.detJ) / ne)
        elif spec.kind == IDEAL_EQUAL_SIZE:
            if spec.size is None or spec.size <= 0:
                raise ValueError("ideal_equal_size needs a positive size")
            zeta = spec.size
        else:
            raise ValueError(f"unknown target kind {spec.kind!r}")
        W0 = compose_target(zeta, spec.rotation, spec.skew, spec.aspect)
        W = np.broadcast_to(W0, (ne, nq, 2, 2)).copy()
    detW = _det(W)
    if np.any(detW <= 0):
        raise ValueError("target matrices must have positive determinant")
    Winv = np.linalg.inv(W)
    return W, Winv, detW


# surface fitting --------------------------------------------------------------

def locate_points(mesh, X, max_iter=30, tol=1e-14):
    """Element and reference coordinates of physical points ``X`` (n, 2).

    Starts from the element of the axis-aligned bounding box grid and walks to
    neighbours while Newton iterates on the reference coordinates. Points
    outside the mesh are clamped to the nearest boundary element.

    Returns ``(elements, xi, outside)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    counts = np.array(mesh.counts)
    lo, hi = np.array(mesh.extents).T
    t = (X - lo) / (hi - lo) * counts
    cell = np.clip(np.floor(t).astype(int), 0, counts - 1)
    xi = np.clip(t - cell, 0.0, 1.0)
    strides = np.cumprod((1,) + mesh.counts[:-1])
    Xe_all = mesh.element_nodes()
    outside = np.zeros(len(X), dtype=bool)
    for _ in range(max_iter):
        e = (cell * strides).sum(axis=1)
        N, dN = shape_functions(mesh.geom_order, xi)
        Xe = Xe_all[e]
        Y = np.einsum("ki,kic->kc", N, Xe)
        J = np.einsum("dki,kic->kcd", dN, Xe)
        dxi = np.linalg.solve(J, (X - Y)[..., None])[..., 0]
        xi = xi + dxi
        # walk across faces, clamp at the domain boundary
        shift = np.floor(xi).astype(int)
        newcell = np.clip(cell + shift, 0, counts - 1)
        moved = newcell - cell
        xi = xi - moved
        cell = newcell
        outside = np.any((xi < -1e-12) | (xi > 1 + 1e-12), axis=1)
        xi = np.clip(xi, 0.0, 1.0)
        if np.all(np.abs(dxi) <= tol) and not np.any(moved):
            break
    e = (cell * strides).sum(axis=1)
    return e, xi, outside


class SurfaceFitting:
    """Penalty ``weight * sum_s sigma(x_s)^2`` for a level set fixed in space.

    ``sigma`` is a nodal scalar H1 field on ``background`` (usually the initial
    mesh) evaluated at moved node positions through the background map.
    ``nodes`` are indices into the mesh node list.
    """

    def __init__(self, background, sigma, nodes, weight, order=None):
        self.background = background
        self.order = order or background.geom_order
        self.fes = FESpace(background, self.order)
        self.sigma = np.asarray(sigma, dtype=float)
        if self.sigma.shape != (self.fes.ndofs,):
            raise ValueError("sigma must be a nodal vector of the background space")
        self.nodes = np.asarray(nodes, dtype=int)
        if weight < 0:
            raise ValueError("fitting weight must be >= 0")
        self.weight = float(weight)
        self.outside = False

    def evaluate(self, X, with_grad=False):
        """sigma (and its physical gradient) at points ``X``."""
        e, xi, outside = locate_points(self.background, X)
        self.outside = bool(np.any(outside))
        N, dN = shape_functions(self.order, xi)
        se = self.sigma[self.fes.l_to_e[e]]
        val = np.einsum("ki,ki->k", N, se)
        if not with_grad:
            return val
        dref = np.einsum("dki,ki->kd", dN, se)
        Ng, dNg = shape_functions(self.background.geom_order, xi)
        Xe = self.background.element_nodes()[e]
        J = np.einsum("dki,kic->kcd", dNg, Xe)
        grad = np.linalg.solve(np.swapaxes(J, -1, -2), dref[..., None])[..., 0]
        return val, grad


def level_set_field(mesh, func, order=None):
    """Nodal interpolant of ``func`` on the H1 space of the mesh."""
    fes = FESpace(mesh, order or mesh.geom_order)
    return fes.interpolate(func)


def interface_nodes(mesh, sigma, order=None):
    """Mesh nodes on faces separating elements of opposite sign of sigma.

    Each element takes the sign of sigma at its centre; the returned node
    indices lie on the faces where that sign flips, which is the layer of
    nodes closest to the zero level set.
    """
    order = order or mesh.geom_order
    fes = FESpace(mesh, order)
    N, _ = shape_functions(order, np.array([[0.5, 0.5]]))
    centre = fes.gather_e(sigma) @ N[0]
    nx, ny = mesh.counts
    mat = (centre > 0).reshape(ny, nx)
    g = mesh.geom_order
    sx = g * nx + 1
    picked = set()
    for ey in range(ny):
        for ex in range(nx):
            if ex + 1 < nx and mat[ey, ex] != mat[ey, ex + 1]:
                ix = g * (ex + 1)
                picked.update(ix + sx * iy for iy in range(g * ey, g * ey + g + 1))
            if ey + 1 < ny and mat[ey, ex] != mat[ey + 1, ex]:
                iy = g * (ey + 1)
                picked.update(ix + sx * iy for ix in range(g * ex, g * ex + g + 1))
    return np.array(sorted(picked), dtype=int)


# objective ------------------------------------------------------------------

class TmopProblem:
    """Objective, gradient and bookkeeping for optimizing a 2D mesh.

    Parameters
    ----------
    mesh : CartesianMesh
        Initial mesh; node coordinates are the optimization variables.
    metric : str, tuple or Metric
    target : TargetSpec
    q : int, optional
        Gauss points per axis, ``geom_order + 2`` by default.
    fixed_dofs : array_like of int, optional
        Indices into the interleaved node vector; all boundary nodes by default.
    fitting : SurfaceFitting, optional
    """

    def __init__(self, mesh, metric=SHAPE, target=None, q=None, fixed_dofs=None, fitting=None):
        if mesh.dim != 2:
            raise ValueError("mesh optimization is implemented for 2D meshes only")
        self.mesh = mesh
        self.metric = _as_metric(metric)
        self.target = target or TargetSpec()
        self.fes = FESpace(mesh, mesh.geom_order, vdim=2)
        self.basis = tabulate(mesh.geom_order, q or mesh.geom_order + 2)
        self.q = self.basis.q
        self.W, self.Winv, self.detW = resolve_targets(mesh, self.target, self.q)
        geom = geometric_factors(mesh, self.q)
        self.wq = geom.weights * self.detW
        self.ids = mesh.element_node_ids()
        nn = mesh.num_nodes
        if fixed_dofs is None:
            nodes = np.nonzero(boundary_lattice_mask(mesh.lattice_shape))[0]
            fixed_dofs = (nodes[:, None] * 2 + np.arange(2)).ravel()
        self.fixed_dofs = np.unique(np.asarray(fixed_dofs, dtype=int))
        if self.fixed_dofs.size and (self.fixed_dofs[0] < 0 or self.fixed_dofs[-1] >= 2 * nn):
            raise ValueError("fixed dof out of range")
        self.free = np.ones(2 * nn, dtype=bool)
        self.free[self.fixed_dofs] = False
        self.fitting = fitting

    @property
    def x0(self):
        return np.array(self.mesh.nodes, dtype=float).ravel()

    def jacobians(self, x):
        """A at every quadrature point, shape (ne, nq, 2, 2)."""
        b = self.basis
        ne, n1 = self.mesh.num_elements, b.ndof
        Xe = np.asarray(x).reshape(-1, 2)[self.ids]
        A = np.empty((ne, b.q * b.q, 2, 2))
        for c in range(2):
            comp = Xe[..., c].reshape(ne, n1, n1)
            for d in range(2):
                A[:, :, c, d] = tensor_apply(grad_mats(b.B, b.G, 2, d), comp).reshape(ne, -1)
        return A

    def min_det(self, x):
        return float(_det(self.jacobians(x)).min())

    def quality_objective(self, x):
        A = self.jacobians(x)
        if np.any(~(_det(A) > 0.0)):
            raise InvertedElementError("inverted element: det A <= 0")
        T = A @ self.Winv
        return float(np.sum(self.wq * metric_eval(self.metric, T)))

    def fitting_objective(self, x):
        fit = self.fitting
        if fit is None or fit.weight == 0.0 or fit.nodes.size == 0:
            return 0.0
        s = fit.evaluate(np.asarray(x).reshape(-1, 2)[fit.nodes])
        return fit.weight * float(s @ s)

    def objective(self, x):
        return self.quality_objective(x) + self.fitting_objective(x)

    def gradient(self, x):
        """dF/dx as an interleaved node vector (fixed dofs included)."""
        b = self.basis
        ne, n1, q = self.mesh.num_elements, b.ndof, b.q
        A = self.jacobians(x)
        if np.any(~(_det(A) > 0.0)):
            raise InvertedElementError("inverted element: det A <= 0")
        T = A @ self.Winv
        P = metric_grad(self.metric, T) @ np.swapaxes(self.Winv, -1, -2)
        P = P * self.wq[..., None, None]
        nn = self.mesh.num_nodes
        g = np.zeros((nn, 2))
        for c in range(2):
            ge = 0.0
            for d in range(2):
                ge = ge + tensor_apply(grad_mats(b.B.T, b.G.T, 2, d),
                                       P[..., c, d].reshape(ne, q, q))
            g[:, c] = np.bincount(self.ids.ravel(), weights=ge.ravel(), minlength=nn)
        fit = self.fitting
        if fit is not None and fit.weight != 0.0 and fit.nodes.size:
            s, ds = fit.evaluate(np.asarray(x).reshape(-1, 2)[fit.nodes], with_grad=True)
            np.add.at(g, fit.nodes, 2.0 * fit.weight * s[:, None] * ds)
        return g.ravel()


def tmop_objective(problem, x):
    return problem.objective(x)


def tmop_gradient(problem, x):
    return problem.gradient(x)


# Newton solver ----------------------------------------------------------------

@dataclass
class NewtonReport:
    iterations: int = 0
    converged: bool = False
    failed: bool = False
    objective: float = np.nan
    grad_inf: float = np.nan
    min_det: float = np.nan
    history: list = field(default_factory=list)

    CSV_HEADER = ("iter", "objective", "grad_inf", "step")


def _truncated_cg(hess, g, max_iter=50, rel_tol=1e-2):
    """Approximately solve H d = -g; stops at negative curvature."""
    d = np.zeros_like(g)
    r = -g.copy()
    p = r.copy()
    rr = r @ r
    r0 = np.sqrt(rr)
    for _ in range(max_iter):
        Hp = hess(p)
        pHp = p @ Hp
        if pHp <= 0.0:
            return d if np.any(d) else -g
        alpha = rr / pHp
        d += alpha * p
        r -= alpha * Hp
        rr_new = r @ r
        if np.sqrt(rr_new) <= rel_tol * r0:
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    return d


def tmop_newton_solve(problem, x0=None, tol=1e-10, max_iter=50, max_halvings=30):
    """Newton-Krylov minimization of the TMOP objective.

    Hessian-vector products are central differences of the analytic gradient
    with step ``1e-7 * ||x|| / ||v||``; the inner CG runs at most 50 iterations
    to relative tolerance 1e-2. A backtracking line search halves the step
    until no element inverts and the objective decreases. Convergence is
    ``max |dF/dx| <= tol`` over free dofs.

    Returns
    -------
    x : ndarray
    report : NewtonReport
    """
    x = problem.x0 if x0 is None else np.array(x0, dtype=float)
    free = problem.free
    if problem.min_det(x) <= 0.0:
        raise InvertedElementError("initial mesh is inverted")
    F = problem.objective(x)
    g = problem.gradient(x) * free
    rep = NewtonReport()
    rep.history.append((0, F, float(np.abs(g).max(initial=0.0)), 0.0))
    xnorm = np.linalg.norm(x)

    def hess(v):
        eps = 1e-7 * xnorm / np.linalg.norm(v)
        gp = problem.gradient(x + eps * v)
        gm = problem.gradient(x - eps * v)
        return (gp - gm) / (2.0 * eps) * free

    for it in range(1, max_iter + 1):
        if np.abs(g).max(initial=0.0) <= tol:
            rep.converged = True
            break
        d = _truncated_cg(hess, g) * free
        step = 1.0
        accepted = False
        for _ in range(max_halvings + 1):
            xn = x + step * d
            try:
                Fn = problem.objective(xn)
            except InvertedElementError:
                step *= 0.5
                continue
            if Fn < F:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            rep.failed = True
            break
        x, F = xn, Fn
        g = problem.gradient(x) * free
        rep.iterations = it
        rep.history.append((it, F, float(np.abs(g).max(initial=0.0)), step))
    else:
        rep.converged = bool(np.abs(g).max(initial=0.0) <= tol)
    rep.objective = F
    rep.grad_inf = float(np.abs(g).max(initial=0.0))
    rep.min_det = problem.min_det(x)
    return x, rep


def circle_fitting_problem(n=8, radius=0.3, centre=(0.5, 0.5), weight=1e4,
                           metric=(SHAPE_SIZE, BALANCED_GAMMA), geom_order=1):
    """Uniform ``n x n`` unit-square mesh set up to fit a circle.

    sigma is the signed distance to the circle, interpolated on the mesh.
    """
    from .mesh import make_cartesian_mesh

    mesh = make_cartesian_mesh(2, (n, n), geom_order)
    c = np.asarray(centre)
    sigma = level_set_field(mesh, lambda X: np.linalg.norm(X - c, axis=1) - radius)
    nodes = interface_nodes(mesh, sigma)
    fit = SurfaceFitting(mesh, sigma, nodes, weight)
    return TmopProblem(mesh, metric, TargetSpec(IDEAL_UNIFORM), fitting=fit)


__all__ = ["Metric", "SHAPE", "SIZE", "SHAPE_SIZE", "BALANCED_GAMMA", "metric_eval",
           "metric_grad", "TargetSpec", "IDEAL_UNIFORM", "IDEAL_EQUAL_SIZE", "GIVEN",
           "rotation_matrix", "skew_matrix", "aspect_matrix", "compose_target",
           "resolve_targets", "TmopProblem", "SurfaceFitting", "interface_nodes",
           "level_set_field", "locate_points", "tmop_objective", "tmop_gradient",
           "tmop_newton_solve", "NewtonReport", "InvertedElementError",
           "circle_fitting_problem"]
