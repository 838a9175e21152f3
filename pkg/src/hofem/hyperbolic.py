"""Discontinuous Galerkin integrator for first-order hyperbolic systems.

Semi-discrete form on a periodic 2D quad mesh:

    M du/dt = sum_E int_E F(u) : grad v dx - sum_e int_e Fhat(n_e; u-, u+) . [[v]] ds

with [[v]] = v- - v+, ``n_e`` pointing from the minus to the plus element, and
the Rusanov numerical flux. The state is an L2 L-vector with components
interleaved per dof.
"""

from dataclasses import dataclass

import numpy as np

from .basis import gll_nodes, gauss_quadrature, lagrange_eval, tabulate
from .fespace import L2, FESpace
from .mesh import geometric_factors, map_reference
from .operators import MASS, PAOperator
from .tensor import grad_mats, tensor_apply


class InadmissibleStateError(ValueError):
    def __init__(self, message, face=None, stage=None):
        super().__init__(message)
        self.face = face
        self.stage = stage


# conservation laws ----------------------------------------------------------

class ConservationLaw:
    """Flux ``F(u)`` of shape (..., m, dim) and maximal wave speed along ``n``."""

    num_components = 1
    dim = 2

    def flux(self, u):
        raise NotImplementedError

    def max_speed(self, u, n):
        raise NotImplementedError

    def max_speed_any(self, u):
        """Upper bound of the wave speed over all directions."""
        raise NotImplementedError

    def admissible(self, u):
        return np.ones(u.shape[:-1], dtype=bool)


class LinearAdvection(ConservationLaw):
    def __init__(self, velocity=(1.0, 0.0)):
        self.b = np.asarray(velocity, dtype=float)
        self.dim = len(self.b)

    def flux(self, u):
        return u[..., :, None] * self.b

    def max_speed(self, u, n):
        return np.abs(n @ self.b) * np.ones(u.shape[:-1])

    def max_speed_any(self, u):
        return np.linalg.norm(self.b) * np.ones(u.shape[:-1])


class ShallowWater(ConservationLaw):
    """State (h, hu, hv) over a flat bottom."""

    num_components = 3

    def __init__(self, gravity=9.81):
        self.g = float(gravity)

    def admissible(self, u):
        return u[..., 0] > 0.0

    def flux(self, u):
        h, hu, hv = u[..., 0], u[..., 1], u[..., 2]
        p = 0.5 * self.g * h * h
        vx, vy = hu / h, hv / h
        return np.stack([np.stack([hu, hv], -1),
                         np.stack([hu * vx + p, hu * vy], -1),
                         np.stack([hv * vx, hv * vy + p], -1)], -2)

    def max_speed(self, u, n):
        h = u[..., 0]
        vn = (u[..., 1] * n[..., 0] + u[..., 2] * n[..., 1]) / h
        return np.abs(vn) + np.sqrt(self.g * h)

    def max_speed_any(self, u):
        h = u[..., 0]
        return np.hypot(u[..., 1], u[..., 2]) / h + np.sqrt(self.g * h)


def rusanov_flux(law, n, u_minus, u_plus):
    """Local Lax-Friedrichs flux ``Fhat . n`` (vectorized over leading axes).

    Fhat = (F(u-) + F(u+)) n / 2 - max(lambda-, lambda+) (u+ - u-) / 2
    """
    n = np.asarray(n, dtype=float)
    um = np.asarray(u_minus, dtype=float)
    up = np.asarray(u_plus, dtype=float)
    bad = ~(law.admissible(um) & law.admissible(up))
    if np.any(bad):
        face = np.argwhere(np.atleast_1d(bad))[0]
        raise InadmissibleStateError(f"inadmissible state at face point {tuple(face)}",
                                     face=tuple(int(i) for i in face))
    fn = (law.flux(um) + law.flux(up)) @ n[..., :, None]
    lam = np.maximum(law.max_speed(um, n), law.max_speed(up, n))
    return 0.5 * fn[..., 0] - 0.5 * lam[..., None] * (up - um)


# DG discretization ------------------------------------------------------------

@dataclass
class _Faces:
    minus: np.ndarray    # element on the minus side
    plus: np.ndarray
    axis: int            # 0: faces normal to x, 1: normal to y
    nds: np.ndarray      # (nf, qf, dim): unit normal times w * |ds|
    normal: np.ndarray   # (nf, qf, dim) unit normal
    area: np.ndarray     # (nf, qf) quadrature weight times surface Jacobian


class DGState:
    """L2 space of degree ``p`` with ``m`` components on a periodic 2D mesh.

    Holds the per-element Cholesky factors of the mass matrix, the volume
    quadrature data ``w det(J) J^{-1}`` and face geometry.
    """

    def __init__(self, law, mesh, p, u=None):
        if mesh.dim != 2 or not all(mesh.periodic):
            raise ValueError("the DG integrator runs on fully periodic 2D meshes")
        self.law = law
        self.mesh = mesh
        self.p = p
        self.m = law.num_components
        self.fes = FESpace(mesh, p, L2, vdim=self.m)
        self.basis = tabulate(p)
        q = self.basis.q
        geom = geometric_factors(mesh, q)
        self.geom = geom
        Jinv = np.swapaxes(geom.JinvT, -1, -2)
        self.vol = (geom.weights * geom.detJ)[..., None, None] * Jinv  # (ne, nq, dim, dim)
        mass = PAOperator(FESpace(mesh, p, L2), MASS, q=q)
        M = mass.element_matrices()
        self.mass_matrices = M
        self.chol = np.linalg.cholesky(M)
        Linv = np.linalg.inv(self.chol)
        self.Minv = np.swapaxes(Linv, 1, 2) @ Linv
        self._faces = [self._build_faces(a) for a in range(2)]
        self.u = np.zeros(self.fes.vsize) if u is None else np.array(u, dtype=float)
        self.t = 0.0

    def _build_faces(self, axis):
        mesh, p = self.mesh, self.p
        nx, ny = mesh.counts
        ex, ey = np.meshgrid(np.arange(nx), np.arange(ny))
        minus = (ex + nx * ey).ravel()
        if axis == 0:
            plus = ((ex + 1) % nx + nx * ey).ravel()
        else:
            plus = (ex + nx * ((ey + 1) % ny)).ravel()
        qf = p + 2
        pts, wts = gauss_quadrature(qf)
        xi = np.zeros((qf, 2))
        xi[:, axis] = 1.0
        xi[:, 1 - axis] = pts
        _, J = map_reference(mesh, xi, minus)
        # outward normal of the face xi_axis = 1: det(J) J^{-T} e_axis, scaled by ds
        cof = np.empty(J.shape[:-2] + (2,))
        if axis == 0:
            cof[..., 0], cof[..., 1] = J[..., 1, 1], -J[..., 0, 1]
        else:
            cof[..., 0], cof[..., 1] = -J[..., 1, 0], J[..., 0, 0]
        length = np.linalg.norm(cof, axis=-1)
        normal = cof / length[..., None]
        area = wts * length
        return _Faces(minus, plus, axis, normal * area[..., None], normal, area)

    # --- kernels --------------------------------------------------------
    def element_values(self, u):
        ne, n1 = self.mesh.num_elements, self.p + 1
        return np.asarray(u).reshape(ne, n1, n1, self.m)

    def _traces(self, ue, faces, side):
        """Face values on the minus (side 1.0) or plus (side 0.0) face."""
        n1 = self.p + 1
        pts, _ = gauss_quadrature(self.p + 2)
        Bt = lagrange_eval(gll_nodes(self.p), pts)
        idx = n1 - 1 if side == 1.0 else 0
        if faces.axis == 0:
            nodal = ue[:, :, idx, :]      # (ne, iy, m)
        else:
            nodal = ue[:, idx, :, :]      # (ne, ix, m)
        return np.einsum("ki,eic->ekc", Bt, nodal), Bt

    def residual(self, u=None, t=None):
        """du/dt as an L-vector."""
        law = self.law
        u = self.u if u is None else u
        ne, n1, m = self.mesh.num_elements, self.p + 1, self.m
        b = self.basis
        q = b.q
        ue = self.element_values(u)
        # volume term: int F(u) : grad v = sum_q (w det J J^{-1} F^T) . grad_ref v
        uq = np.stack([tensor_apply([b.B, b.B], ue[..., c]) for c in range(m)], -1)
        uq = uq.reshape(ne, q * q, m)
        if not np.all(law.admissible(uq)):
            e = int(np.argwhere(~law.admissible(uq))[0][0])
            raise InadmissibleStateError(f"inadmissible state in element {e}")
        F = law.flux(uq)                                   # (ne, nq, m, dim)
        G = np.einsum("ekdj,ekcj->ekcd", self.vol, F)      # ref-direction fluxes
        rhs = np.zeros((ne, n1, n1, m))
        for c in range(m):
            for d in range(2):
                rhs[..., c] += tensor_apply(grad_mats(b.B.T, b.G.T, 2, d),
                                            G[:, :, c, d].reshape(ne, q, q))
        # face terms
        for faces in self._faces:
            um_all, Bt = self._traces(ue, faces, 1.0)
            up_all, _ = self._traces(ue, faces, 0.0)
            um = um_all[faces.minus]
            up = up_all[faces.plus]
            try:
                fhat = rusanov_flux(law, faces.normal, um, up)
            except InadmissibleStateError as err:
                f = err.face[0] if err.face else None
                raise InadmissibleStateError(
                    f"inadmissible state on face {f} (axis {faces.axis})", face=f) from err
            flux = fhat * faces.area[..., None]            # (nf, qf, m)
            contrib = np.einsum("ki,fkc->fic", Bt, flux)   # (nf, n1, m)
            idx_m, idx_p = n1 - 1, 0
            if faces.axis == 0:
                np.subtract.at(rhs, (faces.minus, slice(None), idx_m), contrib)
                np.add.at(rhs, (faces.plus, slice(None), idx_p), contrib)
            else:
                np.subtract.at(rhs, (faces.minus, idx_m), contrib)
                np.add.at(rhs, (faces.plus, idx_p), contrib)
        rhs = rhs.reshape(ne, n1 * n1, m)
        return np.einsum("eij,ejc->eic", self.Minv, rhs).reshape(-1)

    def mass_apply(self, u):
        ue = np.asarray(u).reshape(self.mesh.num_elements, -1, self.m)
        return np.einsum("eij,ejc->eic", self.mass_matrices, ue).reshape(-1)

    def total_mass(self, u=None):
        """Integral of each component."""
        u = self.u if u is None else u
        return self.mass_apply(u).reshape(-1, self.m).sum(axis=0)

    def l2_norm(self, u=None):
        u = self.u if u is None else u
        return float(np.sqrt(u @ self.mass_apply(u)))

    def l1_norm(self, u=None):
        """Quadrature value of the integral of |u| per component."""
        u = self.u if u is None else u
        b, geom = self.basis, self.geom
        ue = self.element_values(u)
        uq = np.stack([tensor_apply([b.B, b.B], ue[..., c]).reshape(ue.shape[0], -1)
                       for c in range(self.m)], -1)
        return np.sum((geom.weights * geom.detJ)[..., None] * np.abs(uq), axis=(0, 1))

    def project(self, func):
        """L2 projection of ``func(X) -> (n, m)`` onto the space."""
        geom = self.geom
        ne, q = geom.detJ.shape[0], self.basis.q
        vals = np.asarray(func(geom.X.reshape(-1, 2)), dtype=float).reshape(ne, q * q, self.m)
        vals = vals * (geom.weights * geom.detJ)[..., None]
        b = self.basis
        rhs = np.stack([tensor_apply([b.B.T, b.B.T], vals[..., c].reshape(ne, q, q))
                        .reshape(ne, -1) for c in range(self.m)], -1)
        return np.einsum("eij,ejc->eic", self.Minv, rhs).reshape(-1)

    def l2_error(self, func, u=None, q=None):
        """L2 norm of ``u - func`` summed over components."""
        u = self.u if u is None else u
        b = tabulate(self.p, q or self.p + 3)
        geom = geometric_factors(self.mesh, b.q)
        ne = self.mesh.num_elements
        ue = self.element_values(u)
        uq = np.stack([tensor_apply([b.B, b.B], ue[..., c]).reshape(ne, -1)
                       for c in range(self.m)], -1)
        ex = np.asarray(func(geom.X.reshape(-1, 2)), dtype=float).reshape(uq.shape)
        return float(np.sqrt(np.sum((geom.weights * geom.detJ)[..., None] * (uq - ex) ** 2)))


def dg_residual(law, state, t=0.0):
    return state.residual(state.u, t)


def ssp_rk3_step(law, state, dt):
    """Advance ``state`` in place by one three-stage SSP Runge-Kutta step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u0, t = state.u, state.t
    stage = 1
    try:
        # increment form of the Shu-Osher stages: a zero residual is a no-op
        u1 = u0 + dt * state.residual(u0, t)
        stage = 2
        u2 = u0 + 0.25 * ((u1 - u0) + dt * state.residual(u1, t + dt))
        stage = 3
        u3 = u0 + (2.0 / 3.0) * ((u2 - u0) + dt * state.residual(u2, t + 0.5 * dt))
    except InadmissibleStateError as err:
        raise InadmissibleStateError(f"stage {stage}: {err}", face=err.face, stage=stage) from err
    state.u = u3
    state.t = t + dt
    return state


def stable_dt(law, state, cfl):
    """cfl * min_E (h_E / lambda_E) / (2p + 1).

    ``h_E`` is the smallest singular value of the element Jacobian (the width
    of the element) and ``lambda_E`` the largest wave speed at its nodes.
    """
    J = state.geom.J
    hmin = np.linalg.svd(J, compute_uv=False)[..., -1].min(axis=1)
    ue = np.asarray(state.u).reshape(state.mesh.num_elements, -1, state.m)
    lam = law.max_speed_any(ue).max(axis=1)
    lam = np.maximum(lam, 1e-300)
    return float(cfl * np.min(hmin / lam) / (2 * state.p + 1))
