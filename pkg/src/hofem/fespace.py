"""Finite element spaces and the T-, L- and E-vector layouts.

T-vectors hold true dofs and L-vectors local dofs; in this serial code the
T-to-L prolongation is the identity, so both layouts coincide. E-vectors hold
one copy of every dof per element that touches it. The gather ``G`` maps L to E
and ``scatter_e_transpose`` applies its transpose (summing shared entries).

H1 dofs are numbered by their position on the global Gauss-Lobatto lattice
(x fastest), with the last layer folded onto the first along periodic axes.
L2 dofs are numbered element by element. Vector spaces interleave components
per node ("xyzxyz").
"""

import numpy as np

from .basis import gll_nodes
from .mesh import boundary_lattice_mask, lattice_shape, sample_lattice, element_lattice_ids, map_reference
from .tensor import tensor_points

H1 = "H1"
L2 = "L2"


class FESpace:
    """Scalar or vector H1/L2 space of degree ``p`` on a :class:`CartesianMesh`."""

    def __init__(self, mesh, p, continuity=H1, vdim=1):
        if p < 1:
            raise ValueError(f"degree must be >= 1, got {p}")
        if continuity not in (H1, L2):
            raise ValueError(f"unknown continuity {continuity!r}")
        if vdim < 1:
            raise ValueError(f"vdim must be >= 1, got {vdim}")
        self.mesh = mesh
        self.p = p
        self.continuity = continuity
        self.vdim = vdim
        self.dim = mesh.dim
        ne = mesh.num_elements
        self.ndof_elem = (p + 1) ** mesh.dim
        if continuity == L2:
            self.l_to_e = np.arange(ne * self.ndof_elem).reshape(ne, self.ndof_elem)
            self.nscalar = ne * self.ndof_elem
        else:
            full = lattice_shape(mesh.counts, p)
            ids = element_lattice_ids(mesh.counts, p)
            # fold periodic axes, then renumber the folded lattice contiguously
            red = tuple(p * n if per else p * n + 1 for n, per in zip(mesh.counts, mesh.periodic))
            idx = np.indices(full[::-1]).reshape(self.dim, -1)[::-1]
            folded = np.stack([idx[a] % red[a] for a in range(self.dim)])
            strides = np.cumprod((1,) + red[:-1])
            lat_to_dof = (folded * strides[:, None]).sum(axis=0)
            self.l_to_e = lat_to_dof[ids]
            self.lattice_to_dof = lat_to_dof
            self.nscalar = int(np.prod(red))
        self.l_to_e.setflags(write=False)
        self._mult = None

    # sizes -----------------------------------------------------------------
    @property
    def ndofs(self):
        """Number of scalar dofs (per component)."""
        return self.nscalar

    @property
    def vsize(self):
        """Length of an L-vector (and of a T-vector)."""
        return self.nscalar * self.vdim

    @property
    def true_vsize(self):
        return self.vsize

    @property
    def num_elements(self):
        return self.mesh.num_elements

    def e_shape(self):
        ne = self.mesh.num_elements
        if self.vdim == 1:
            return (ne, self.ndof_elem)
        return (ne, self.ndof_elem, self.vdim)

    # T <-> L ---------------------------------------------------------------
    def prolong(self, t_vec):
        """T-vector to L-vector (identity in serial)."""
        return np.asarray(t_vec)

    def restrict_transpose(self, l_vec):
        """Transpose of :meth:`prolong`."""
        return np.asarray(l_vec)

    # L <-> E ---------------------------------------------------------------
    def _full_index(self):
        if self.vdim == 1:
            return self.l_to_e
        return self.l_to_e[:, :, None] * self.vdim + np.arange(self.vdim)

    def gather_e(self, l_vec):
        """E-vector of element-local copies, shape :meth:`e_shape`."""
        l_vec = np.asarray(l_vec)
        if l_vec.shape != (self.vsize,):
            raise ValueError(f"L-vector must have length {self.vsize}, got {l_vec.shape}")
        return l_vec[self._full_index()]

    def scatter_e_transpose(self, e_vec):
        """Sum element contributions into an L-vector (transpose of the gather).

        ``np.bincount`` accumulates in index order, so the reduction is
        deterministic.
        """
        e_vec = np.asarray(e_vec)
        if e_vec.shape != self.e_shape():
            raise ValueError(f"E-vector must have shape {self.e_shape()}, got {e_vec.shape}")
        return np.bincount(self._full_index().ravel(), weights=e_vec.ravel(),
                           minlength=self.vsize)

    def multiplicity(self):
        """Number of element copies of each L-vector entry."""
        if self._mult is None:
            self._mult = self.scatter_e_transpose(np.ones(self.e_shape()))
        return self._mult

    # geometry of dofs ------------------------------------------------------
    def dof_coords(self):
        """Physical position of every scalar dof, shape ``(ndofs, dim)``."""
        if self.continuity == L2:
            xi = tensor_points(gll_nodes(self.p), self.dim)
            X, _ = map_reference(self.mesh, xi)
            return X.reshape(-1, self.dim)
        pts = sample_lattice(self.mesh, self.p)
        out = np.empty((self.nscalar, self.dim))
        # along periodic axes the folded dof takes the position of the first layer
        out[self.lattice_to_dof[::-1]] = pts[::-1]
        return out

    def interpolate(self, func):
        """Nodal interpolant of ``func(X)``; X has shape ``(n, dim)``.

        ``func`` returns shape ``(n,)`` for scalars or ``(n, vdim)``.
        """
        vals = np.asarray(func(self.dof_coords()), dtype=float)
        return vals.reshape(self.vsize)


def build_fespace(mesh, p, continuity=H1, vdim=1):
    return FESpace(mesh, p, continuity, vdim)


def gather_e(fes, l_vec):
    return fes.gather_e(l_vec)


def scatter_e_transpose(fes, e_vec):
    return fes.scatter_e_transpose(e_vec)


def boundary_dofs(fes, attrs=None):
    """Sorted T-dof indices on boundary faces whose attribute is in ``attrs``.

    ``attrs=None`` selects every boundary face. Periodic axes have no boundary.
    Vector spaces return every component of each selected node.
    """
    if fes.continuity != H1:
        raise ValueError("boundary dofs are only defined for H1 spaces")
    mesh = fes.mesh
    dim = mesh.dim
    shape = lattice_shape(mesh.counts, fes.p)
    if attrs is None:
        attrs = mesh.boundary_attrs
    attrs = set(attrs)
    idx = np.indices(shape[::-1]).reshape(dim, -1)[::-1]
    mask = np.zeros(idx.shape[1], dtype=bool)
    for a in range(dim):
        if mesh.periodic[a]:
            continue
        if mesh.boundary_attrs[2 * a] in attrs:
            mask |= idx[a] == 0
        if mesh.boundary_attrs[2 * a + 1] in attrs:
            mask |= idx[a] == shape[a] - 1
    nodes = np.unique(fes.lattice_to_dof[mask])
    if fes.vdim == 1:
        return nodes
    return (nodes[:, None] * fes.vdim + np.arange(fes.vdim)).ravel()


__all__ = ["FESpace", "H1", "L2", "build_fespace", "gather_e", "scatter_e_transpose",
           "boundary_dofs", "boundary_lattice_mask"]
