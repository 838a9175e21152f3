"""Structured quadrilateral and hexahedral meshes with high-order geometry.

The reference element is [0, 1]^dim. Elements, element-local nodes and
quadrature points are all enumerated lexicographically with x fastest. Node
coordinates live on the global lattice of degree-``geom_order`` Gauss-Lobatto
points, ``geom_order * n_a + 1`` nodes along axis a. The coordinate lattice is
never folded across periodic axes (a periodic box has no single-valued
coordinate field); periodicity is a flag consumed by the finite element spaces.

Boundary attributes are numbered per axis side: x-min 1, x-max 2, y-min 3,
y-max 4, z-min 5, z-max 6.
"""

from dataclasses import dataclass, field

import numpy as np

from .basis import gll_nodes, lagrange_eval, lagrange_eval_deriv, tabulate
from .tensor import grad_mats, tensor_apply, tensor_points


class InvalidMeshError(ValueError):
    """Raised when an element has a non-positive Jacobian determinant."""

    def __init__(self, message, element=None, point=None):
        super().__init__(message)
        self.element = element
        self.point = point


def lattice_shape(counts, p):
    return tuple(p * n + 1 for n in counts)


def element_lattice_ids(counts, p):
    """Flattened lattice index of every element-local node.

    Returns an ``(ne, (p+1)**dim)`` integer array over the non-periodic
    lattice of shape ``lattice_shape(counts, p)``.
    """
    dim = len(counts)
    shape = lattice_shape(counts, p)
    strides = np.cumprod((1,) + shape[:-1])
    local = np.arange(p + 1)
    # multi-indices of elements and local nodes, x fastest
    ecoords = tensor_points(np.arange(max(counts)), dim).astype(int)
    keep = np.all(ecoords < np.array(counts), axis=1)
    ecoords = ecoords[keep]
    lcoords = tensor_points(local, dim).astype(int)
    glob = p * ecoords[:, None, :] + lcoords[None, :, :]
    return (glob * strides).sum(axis=-1)


def _element_order(counts):
    """Element multi-indices ``(ne, dim)`` in lexicographic order."""
    dim = len(counts)
    ecoords = tensor_points(np.arange(max(counts)), dim).astype(int)
    return ecoords[np.all(ecoords < np.array(counts), axis=1)]


@dataclass(frozen=True, eq=False)
class CartesianMesh:
    dim: int
    counts: tuple
    geom_order: int
    nodes: np.ndarray
    periodic: tuple
    extents: tuple
    boundary_attrs: tuple = field(default=())

    @property
    def num_elements(self):
        return int(np.prod(self.counts))

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def lattice_shape(self):
        return lattice_shape(self.counts, self.geom_order)

    def element_node_ids(self):
        return element_lattice_ids(self.counts, self.geom_order)

    def element_nodes(self):
        """Coordinates gathered per element, shape ``(ne, (g+1)**dim, dim)``."""
        return self.nodes[self.element_node_ids()]

    def element_coords(self):
        return _element_order(self.counts)

    def measure(self):
        lo, hi = np.array(self.extents).T
        return float(np.prod(hi - lo))

    def with_nodes(self, nodes):
        nodes = np.array(nodes, dtype=float).reshape(self.nodes.shape)
        nodes.setflags(write=False)
        return CartesianMesh(self.dim, self.counts, self.geom_order, nodes,
                             self.periodic, self.extents, self.boundary_attrs)


def make_cartesian_mesh(dim, counts, geom_order=1, extents=None, periodic=None):
    """Axis-aligned box mesh with nodes at Gauss-Lobatto points of each element.

    Parameters
    ----------
    dim : int
        2 or 3.
    counts : sequence of int
        Elements per axis.
    geom_order : int
        Degree of the coordinate field.
    extents : sequence of (lo, hi), optional
        Bounding box, unit box by default.
    periodic : sequence of bool, optional
    """
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    counts = tuple(int(c) for c in counts)
    if len(counts) != dim:
        raise ValueError(f"expected {dim} element counts, got {counts}")
    if any(c < 1 for c in counts):
        raise ValueError(f"element counts must be >= 1, got {counts}")
    if geom_order < 1:
        raise ValueError(f"geom_order must be >= 1, got {geom_order}")
    if extents is None:
        extents = ((0.0, 1.0),) * dim
    extents = tuple((float(lo), float(hi)) for lo, hi in extents)
    if len(extents) != dim or any(not hi > lo for lo, hi in extents):
        raise ValueError(f"degenerate extents {extents}")
    periodic = tuple(bool(b) for b in (periodic or (False,) * dim))
    if len(periodic) != dim:
        raise ValueError("one periodic flag per axis expected")

    g = geom_order
    ref = gll_nodes(g)
    axes = []
    for (lo, hi), n in zip(extents, counts):
        h = (hi - lo) / n
        t = np.concatenate([[0.0], (np.arange(n)[:, None] + ref[None, 1:]).ravel()])
        x = lo + h * t
        x[-1] = hi
        axes.append(x)
    grids = np.meshgrid(*axes[::-1], indexing="ij")
    nodes = np.stack([grids[dim - 1 - a].ravel() for a in range(dim)], axis=-1)
    nodes.setflags(write=False)
    attrs = tuple(range(1, 2 * dim + 1))
    return CartesianMesh(dim, counts, g, nodes, periodic, extents, attrs)


def transform_mesh(mesh, func):
    """Apply a point map ``func(X) -> X'`` (X of shape ``(n, dim)``) to the nodes."""
    return mesh.with_nodes(func(np.array(mesh.nodes)))


def boundary_lattice_mask(shape, periodic=None):
    """Boolean mask of lattice nodes on the boundary of non-periodic axes."""
    dim = len(shape)
    periodic = periodic or (False,) * dim
    idx = np.indices(shape[::-1])  # axis order z, y, x
    mask = np.zeros(shape[::-1], dtype=bool)
    for a in range(dim):
        if periodic[a]:
            continue
        ia = idx[dim - 1 - a]
        mask |= (ia == 0) | (ia == shape[a] - 1)
    return mask.ravel()


def perturb_mesh(mesh, amplitude, seed=0, fix_boundary=True):
    """Shift nodes by uniform noise in ``[-amplitude, amplitude]`` per component.

    ``amplitude`` is absolute. Boundary nodes stay put when ``fix_boundary``.
    """
    from .rng import SplitMix64

    noise = SplitMix64(seed).uniform(-amplitude, amplitude, mesh.nodes.shape)
    if fix_boundary:
        noise[boundary_lattice_mask(mesh.lattice_shape)] = 0.0
    return mesh.with_nodes(mesh.nodes + noise)


def shape_functions(p, xi):
    """Tensor Lagrange shape functions and reference gradients at points ``xi``.

    ``xi`` has shape ``(npts, dim)``. Returns ``N`` of shape
    ``(npts, (p+1)**dim)`` and ``dN`` of shape ``(dim, npts, (p+1)**dim)``.
    """
    xi = np.atleast_2d(xi)
    npts, dim = xi.shape
    nodes = gll_nodes(p)
    L, dL = zip(*(lagrange_eval_deriv(nodes, xi[:, d]) for d in range(dim)))
    N = np.ones((npts, 1))
    dN = [np.ones((npts, 1)) for _ in range(dim)]
    for d in range(dim):
        N = (L[d][:, :, None] * N[:, None, :]).reshape(npts, -1)
        for k in range(dim):
            f = dL[d] if k == d else L[d]
            dN[k] = (f[:, :, None] * dN[k][:, None, :]).reshape(npts, -1)
    return N, np.array(dN)


def map_reference(mesh, xi, elements=None):
    """Evaluate the coordinate map and its Jacobian at reference points.

    Returns ``X`` of shape ``(ne, npts, dim)`` and ``J`` with
    ``J[e, k, i, j] = dx_i / dxi_j``.
    """
    Xe = mesh.element_nodes()
    if elements is not None:
        Xe = Xe[np.asarray(elements)]
    N, dN = shape_functions(mesh.geom_order, xi)
    X = np.einsum("ki,eic->ekc", N, Xe)
    J = np.einsum("dki,eic->ekcd", dN, Xe)
    return X, J


def sample_lattice(mesh, p):
    """Images of the degree-p Gauss-Lobatto lattice under the coordinate map.

    Returns ``(prod(p * n_a + 1), dim)`` points in lattice order.
    """
    xi = tensor_points(gll_nodes(p), mesh.dim)
    X, _ = map_reference(mesh, xi)
    ids = element_lattice_ids(mesh.counts, p)
    out = np.empty((int(np.prod(lattice_shape(mesh.counts, p))), mesh.dim))
    out[ids.ravel()] = X.reshape(-1, mesh.dim)
    return out


def refine_uniform(mesh):
    """Split every element into 2**dim children; the geometry map is unchanged."""
    g = mesh.geom_order
    ref = gll_nodes(g)
    new_counts = tuple(2 * n for n in mesh.counts)
    # per axis: parent element and parent-reference coordinate of each new node
    parents, vals = [], []
    for n in new_counts:
        I = np.arange(g * n + 1)
        c = np.minimum(I // g, n - 1)
        k = I - c * g
        t = 0.5 * ((c % 2) + ref[k])
        parents.append(c // 2)
        vals.append(lagrange_eval(ref, t))
    shape = lattice_shape(new_counts, g)
    idx = np.indices(shape[::-1]).reshape(mesh.dim, -1)[::-1]  # row a: index along axis a
    par = np.stack([parents[a][idx[a]] for a in range(mesh.dim)], axis=-1)
    pstr = np.cumprod((1,) + mesh.counts[:-1])
    pe = (par * pstr).sum(axis=-1)
    N = np.ones((idx.shape[1], 1))
    for a in range(mesh.dim):
        La = vals[a][idx[a]]
        N = (La[:, :, None] * N[:, None, :]).reshape(idx.shape[1], -1)
    Xe = mesh.element_nodes()
    nodes = np.einsum("ki,kic->kc", N, Xe[pe])
    nodes.setflags(write=False)
    return CartesianMesh(mesh.dim, new_counts, g, nodes, mesh.periodic,
                         mesh.extents, mesh.boundary_attrs)


def lor_refine(mesh, p):
    """Low-order-refined mesh: each element split at its degree-p GLL lattice.

    The result has ``geom_order`` 1 and ``p * n_a`` elements per axis, and its
    vertex lattice coincides index-for-index with the degree-p H1 node lattice
    of ``mesh``.
    """
    if p < 1:
        raise ValueError(f"LOR degree must be >= 1, got {p}")
    verts = sample_lattice(mesh, p)
    verts.setflags(write=False)
    counts = tuple(p * n for n in mesh.counts)
    lor = CartesianMesh(mesh.dim, counts, 1, verts, mesh.periodic, mesh.extents,
                        mesh.boundary_attrs)
    try:
        geometric_factors(lor, 2)
    except InvalidMeshError as err:
        sub = _element_order(counts)[err.element]
        parent = sub // p
        pid = int((parent * np.cumprod((1,) + mesh.counts[:-1])).sum())
        raise InvalidMeshError(
            f"LOR sub-element {err.element} of element {pid} is inverted",
            element=pid, point=err.point) from err
    return lor


@dataclass(frozen=True, eq=False)
class GeomFactors:
    """Quadrature-point geometry, arrays indexed ``[element, point, ...]``."""

    q: int
    weights: np.ndarray
    X: np.ndarray
    J: np.ndarray
    detJ: np.ndarray
    JinvT: np.ndarray


def _det_inv(J):
    dim = J.shape[-1]
    if dim == 2:
        a, b, c, d = J[..., 0, 0], J[..., 0, 1], J[..., 1, 0], J[..., 1, 1]
        det = a * d - b * c
        inv = np.stack([np.stack([d, -b], -1), np.stack([-c, a], -1)], -2)
        return det, inv / det[..., None, None]
    det = np.linalg.det(J)
    return det, np.linalg.inv(J)


def jacobian_det_inv(J):
    """Determinant and inverse of a stack of 2x2 or 3x3 matrices."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return _det_inv(J)


def geometric_factors(mesh, q):
    """Jacobian, determinant and inverse transpose at the q^dim Gauss points.

    Parameters
    ----------
    mesh : CartesianMesh
    q : int
        Gauss points per axis.

    Raises
    ------
    InvalidMeshError
        If det J <= 0 at any point; the first offending element and point
        (in lexicographic order) are reported.
    """
    dim = mesh.dim
    b = tabulate(mesh.geom_order, q)
    ne = mesh.num_elements
    n1 = mesh.geom_order + 1
    Xe = mesh.element_nodes().reshape((ne,) + (n1,) * dim + (dim,))
    X = np.empty((ne, q ** dim, dim))
    J = np.empty((ne, q ** dim, dim, dim))
    for c in range(dim):
        comp = Xe[..., c]
        X[:, :, c] = tensor_apply([b.B] * dim, comp).reshape(ne, -1)
        for d in range(dim):
            J[:, :, c, d] = tensor_apply(grad_mats(b.B, b.G, dim, d), comp).reshape(ne, -1)
    det, inv = jacobian_det_inv(J)
    bad = ~(det > 0.0)
    if np.any(bad):
        e, k = np.argwhere(bad)[0]
        raise InvalidMeshError(
            f"det J = {det[e, k]:.3e} <= 0 in element {e} at quadrature point {k}",
            element=int(e), point=int(k))
    w = np.ones(1)
    for _ in range(dim):
        w = np.kron(b.quad_weights, w)
    return GeomFactors(q, w, X, J, det, np.swapaxes(inv, -1, -2))
