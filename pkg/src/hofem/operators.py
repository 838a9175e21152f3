"""Mass and diffusion operators at four assembly levels.

A partially assembled operator keeps only quadrature-point data ``qdata`` and
applies ``A = G^T B^T D B G`` with ``G`` the element gather, ``B`` the
tensor-product basis tabulation applied axis by axis (sum factorization) and
``D`` the pointwise qdata. Element assembly stores ``B^T D B`` per element as a
dense matrix, and full assembly sums those into a global CSR matrix.

Essential dofs use the "eliminate, keep identity" convention: constrained rows
and columns are zeroed and the diagonal set to one, which keeps the operator
symmetric. Right-hand sides are adjusted with :func:`eliminate_bc`.
"""

import numpy as np
import scipy.sparse as sp

from .basis import tabulate
from .mesh import geometric_factors
from .tensor import FlopCounter, grad_mats, kron_matrix, tensor_apply

MASS = "mass"
DIFFUSION = "diffusion"

#: CSR matrices are scipy's, with sorted column indices per row.
CSRSparseMatrix = sp.csr_matrix


def sym_pairs(dim):
    """Packed (row, col) pairs of a symmetric dim x dim matrix, upper triangle."""
    return [(a, b) for a in range(dim) for b in range(a, dim)]


def _eval_coefficient(coefficient, X):
    if callable(coefficient):
        c = np.asarray(coefficient(X.reshape(-1, X.shape[-1])), dtype=float)
        return c.reshape(X.shape[:-1])
    return np.full(X.shape[:-1], float(coefficient))


def _weighted_gram(L, w, R):
    """Batched ``L^T diag(w_e) R`` for ``w`` of shape (ne, nq)."""
    return np.matmul(L.T, w[:, :, None] * R)


def mass_qdata(geom, coefficient=1.0):
    return geom.weights * geom.detJ * _eval_coefficient(coefficient, geom.X)


def diffusion_qdata(geom, coefficient=1.0):
    """Packed ``w det(J) c J^{-1} J^{-T}`` per quadrature point."""
    c = geom.weights * geom.detJ * _eval_coefficient(coefficient, geom.X)
    Jinv = np.swapaxes(geom.JinvT, -1, -2)
    K = np.einsum("...ik,...jk->...ij", Jinv, Jinv)
    dim = K.shape[-1]
    return np.stack([c * K[..., a, b] for a, b in sym_pairs(dim)], axis=-1)


class PAOperator:
    """Partially assembled mass or diffusion operator on an H1 or L2 space.

    Parameters
    ----------
    fes : FESpace
    kind : {"mass", "diffusion"}
    coefficient : float or callable
        Positive scalar field, evaluated once at quadrature points during setup.
    q : int, optional
        Gauss points per axis, ``p + 2`` by default.
    essential_dofs : array_like of int, optional
    """

    def __init__(self, fes, kind, coefficient=1.0, q=None, essential_dofs=None):
        if kind not in (MASS, DIFFUSION):
            raise ValueError(f"unknown operator kind {kind!r}")
        self.fes = fes
        self.kind = kind
        self.coefficient = coefficient
        self.basis = tabulate(fes.p, q)
        self.q = self.basis.q
        self.dim = fes.dim
        geom = geometric_factors(fes.mesh, self.q)
        if kind == MASS:
            self.qdata = mass_qdata(geom, coefficient)
        else:
            self.qdata = diffusion_qdata(geom, coefficient)
        self.qdata.setflags(write=False)
        self.set_essential_dofs(essential_dofs)

    def set_essential_dofs(self, dofs):
        dofs = np.zeros(0, dtype=int) if dofs is None else np.unique(np.asarray(dofs, dtype=int))
        if dofs.size and (dofs[0] < 0 or dofs[-1] >= self.size):
            raise IndexError("essential dof index out of range")
        self.essential_dofs = dofs

    @property
    def size(self):
        return self.fes.true_vsize

    @property
    def shape(self):
        return (self.size, self.size)

    def storage(self):
        """Number of stored floating point values (the qdata)."""
        return self.qdata.size

    # element kernels -------------------------------------------------------
    def _element_apply(self, u, qdata, counter=None):
        """Apply ``B^T D B`` to scalar element data ``u`` of shape (ne, nd)."""
        ne, dim, b = u.shape[0], self.dim, self.basis
        n1, q = b.ndof, b.q
        u = u.reshape((ne,) + (n1,) * dim)
        if self.kind == MASS:
            uq = tensor_apply([b.B] * dim, u, counter)
            uq = uq * qdata.reshape((ne,) + (q,) * dim)
            return tensor_apply([b.B.T] * dim, uq, counter).reshape(ne, -1)
        grads = [tensor_apply(grad_mats(b.B, b.G, dim, d), u, counter).reshape(ne, -1)
                 for d in range(dim)]
        packed = {pair: k for k, pair in enumerate(sym_pairs(dim))}
        out = np.zeros((ne,) + (n1,) * dim)
        for a in range(dim):
            flux = sum(qdata[..., packed[tuple(sorted((a, c)))]] * grads[c] for c in range(dim))
            flux = flux.reshape((ne,) + (q,) * dim)
            out += tensor_apply(grad_mats(b.B.T, b.G.T, dim, a), flux, counter)
        return out.reshape(ne, -1)

    def _qdata_matrix_free(self):
        geom = geometric_factors(self.fes.mesh, self.q)
        return mass_qdata(geom, self.coefficient)

    def apply_unconstrained(self, x, matrix_free=False, counter=None):
        """``y = A x`` ignoring essential dofs."""
        fes = self.fes
        x = fes.prolong(np.asarray(x, dtype=float))
        if x.shape != (self.size,):
            raise ValueError(f"input must have length {self.size}, got {x.shape}")
        if matrix_free:
            if self.kind != MASS:
                raise ValueError("the fully matrix-free level is provided for mass only")
            qdata = self._qdata_matrix_free()
        else:
            qdata = self.qdata
        ue = fes.gather_e(x)
        if fes.vdim == 1:
            ye = self._element_apply(ue, qdata, counter)
        else:
            ye = np.stack([self._element_apply(ue[..., c], qdata, counter)
                           for c in range(fes.vdim)], axis=-1)
        return fes.restrict_transpose(fes.scatter_e_transpose(ye))

    def mult(self, x, matrix_free=False):
        """``y = A x`` with identity rows and columns on essential dofs."""
        x = np.asarray(x, dtype=float)
        ess = self.essential_dofs
        if ess.size:
            xx = x.copy()
            xx[ess] = 0.0
            y = self.apply_unconstrained(xx, matrix_free)
            y[ess] = x[ess]
            return y
        return self.apply_unconstrained(x, matrix_free)

    __call__ = mult

    def __matmul__(self, x):
        return self.mult(x)

    def apply_flops(self):
        """Multiply-adds in the sum-factorized contractions of one apply."""
        counter = FlopCounter()
        self.apply_unconstrained(np.zeros(self.size), counter=counter)
        return counter.count

    # diagonal --------------------------------------------------------------
    def element_diagonals(self):
        """Diagonals of the element matrices, via contractions of squared bases."""
        ne, dim, b = self.fes.num_elements, self.dim, self.basis
        q = b.q
        shape = (ne,) + (q,) * dim
        if self.kind == MASS:
            return tensor_apply([(b.B * b.B).T] * dim, self.qdata.reshape(shape)).reshape(ne, -1)
        out = 0.0
        for k, (a, c) in enumerate(sym_pairs(dim)):
            mats = [((b.G if i == a else b.B) * (b.G if i == c else b.B)).T for i in range(dim)]
            factor = 1.0 if a == c else 2.0
            out = out + factor * tensor_apply(mats, self.qdata[..., k].reshape(shape))
        return out.reshape(ne, -1)

    def diagonal(self):
        fes = self.fes
        de = self.element_diagonals()
        if fes.vdim > 1:
            de = np.repeat(de[..., None], fes.vdim, axis=-1)
        d = fes.restrict_transpose(fes.scatter_e_transpose(de))
        d[self.essential_dofs] = 1.0
        return d

    # element and full assembly ---------------------------------------------
    def element_matrices(self):
        """Dense ``(ne, nd, nd)`` element matrices ``B_e^T D_e B_e``."""
        dim, b = self.dim, self.basis
        if self.kind == MASS:
            Bk = kron_matrix([b.B] * dim)
            return _weighted_gram(Bk, self.qdata, Bk)
        Gk = [kron_matrix(grad_mats(b.B, b.G, dim, d)) for d in range(dim)]
        ne, nd = self.fes.num_elements, self.fes.ndof_elem
        A = np.zeros((ne, nd, nd))
        for k, (a, c) in enumerate(sym_pairs(dim)):
            blk = _weighted_gram(Gk[a], self.qdata[..., k], Gk[c])
            A += blk if a == c else blk + np.swapaxes(blk, 1, 2)
        return A

    def assemble(self, constrained=True):
        """Global CSR matrix; essential rows/columns replaced by identity."""
        fes = self.fes
        Ae = self.element_matrices()
        idx = fes.l_to_e
        nd = fes.ndof_elem
        rows = np.repeat(idx, nd, axis=1).ravel()
        cols = np.tile(idx, (1, nd)).ravel()
        vals = Ae.ravel()
        if fes.vdim > 1:
            v = fes.vdim
            rows = (rows[:, None] * v + np.arange(v)).ravel()
            cols = (cols[:, None] * v + np.arange(v)).ravel()
            vals = np.repeat(vals, v)
        A = sp.coo_matrix((vals, (rows, cols)), shape=self.shape).tocsr()
        A.sum_duplicates()
        if constrained and self.essential_dofs.size:
            keep = np.ones(self.size)
            keep[self.essential_dofs] = 0.0
            K = sp.diags(keep)
            A = (K @ A @ K + sp.diags(1.0 - keep)).tocsr()
            A.eliminate_zeros()
        A.sort_indices()
        return A


def pa_setup(fes, kind, coefficient=1.0, q=None, essential_dofs=None):
    return PAOperator(fes, kind, coefficient, q, essential_dofs)


def pa_apply(op, x, matrix_free=False):
    return op.mult(x, matrix_free=matrix_free)


def pa_diagonal(op):
    return op.diagonal()


def element_assemble(op):
    return op.element_matrices()


def element_apply(op, elmats, x):
    """Matvec through stored element matrices, same BC convention as ``mult``."""
    fes = op.fes
    x = np.asarray(x, dtype=float)
    ess = op.essential_dofs
    xx = x.copy()
    xx[ess] = 0.0
    ue = fes.gather_e(xx)
    if fes.vdim == 1:
        ye = np.einsum("eij,ej->ei", elmats, ue)
    else:
        ye = np.einsum("eij,ejc->eic", elmats, ue)
    y = fes.scatter_e_transpose(ye)
    y[ess] = x[ess]
    return y


def full_assemble(op, constrained=True):
    return op.assemble(constrained)


def eliminate_bc(op_or_matrix, essential_dofs, x_bc, b):
    """Move known essential values to the right-hand side.

    Returns ``b - A x0`` with ``x0`` equal to ``x_bc`` on essential dofs and zero
    elsewhere, then overwrites the essential entries with ``x_bc``. A sparse
    matrix must be the unconstrained one (``full_assemble(op, False)``).
    """
    ess = np.asarray(essential_dofs, dtype=int)
    b = np.array(b, dtype=float)
    x_bc = np.asarray(x_bc, dtype=float)
    if ess.size and (ess.min() < 0 or ess.max() >= b.size):
        raise IndexError("essential dof index out of range")
    x0 = np.zeros_like(b)
    x0[ess] = x_bc[ess]
    if isinstance(op_or_matrix, PAOperator):
        b -= op_or_matrix.apply_unconstrained(x0)
    else:
        b -= op_or_matrix @ x0
    b[ess] = x_bc[ess]
    return b


# linear forms and norms ------------------------------------------------------

def eval_at_quadrature(fes, u, basis):
    """Values of a scalar field at quadrature points, shape (ne, q**dim)."""
    ne, dim = fes.num_elements, fes.dim
    ue = fes.gather_e(u).reshape((ne,) + (basis.ndof,) * dim)
    return tensor_apply([basis.B] * dim, ue).reshape(ne, -1)


def assemble_rhs(fes, f, q=None):
    """Load vector ``b_i = int f phi_i`` for a scalar H1 or L2 space."""
    basis = tabulate(fes.p, q)
    geom = geometric_factors(fes.mesh, basis.q)
    ne, dim = fes.num_elements, fes.dim
    fq = geom.weights * geom.detJ * _eval_coefficient(f, geom.X)
    be = tensor_apply([basis.B.T] * dim, fq.reshape((ne,) + (basis.q,) * dim))
    return fes.scatter_e_transpose(be.reshape(ne, -1))


def l2_error(fes, u, exact, q=None):
    """L2 norm of ``u - exact`` with ``q`` Gauss points per axis (p + 3 default)."""
    basis = tabulate(fes.p, q if q is not None else fes.p + 3)
    geom = geometric_factors(fes.mesh, basis.q)
    uq = eval_at_quadrature(fes, u, basis)
    err = uq - _eval_coefficient(exact, geom.X)
    return float(np.sqrt(np.sum(geom.weights * geom.detJ * err * err)))
