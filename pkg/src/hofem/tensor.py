"""Sum-factorized tensor-product contractions.

Element arrays are stored with the element index first and one axis per
reference direction, x last (lexicographic, x fastest), e.g. ``u[e, iy, ix]``
in 2D and ``u[e, iz, iy, ix]`` in 3D.
"""

import numpy as np


class FlopCounter:
    """Accumulates multiply-add counts of the contractions it is passed to."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0


def tensor_apply(mats, u, counter=None):
    """Apply 1D matrix ``mats[d]`` along reference axis d (d=0 is x).

    ``u`` has shape ``(ne, n_{dim-1}, ..., n_0)``; matrix d has shape
    ``(m_d, n_d)``. The result has shape ``(ne, m_{dim-1}, ..., m_0)``.
    Cost is one 1D contraction per axis instead of one dense product.
    """
    dim = len(mats)
    for d, M in enumerate(mats):
        ax = u.ndim - 1 - d
        if counter is not None:
            counter.count += u.size * M.shape[0]
        u = np.moveaxis(np.tensordot(u, M, axes=([ax], [1])), -1, ax)
    assert u.ndim == dim + 1
    return u


def kron_matrix(mats):
    """Dense matrix equal to ``tensor_apply(mats, .)`` on flattened elements."""
    K = np.ones((1, 1))
    for M in mats:
        K = np.kron(M, K)
    return K


def grad_mats(B, G, dim, d):
    """Per-axis 1D factors of the derivative along reference direction d."""
    return [G if a == d else B for a in range(dim)]


def tensor_points(points, dim):
    """Tensor-product points in lexicographic order, shape ``(n**dim, dim)``.

    Column 0 is the x coordinate and varies fastest.
    """
    grids = np.meshgrid(*([points] * dim), indexing="ij")
    return np.stack([g.ravel() for g in grids[::-1]], axis=-1)


def tensor_weights(weights, dim):
    w = np.ones(1)
    for _ in range(dim):
        w = np.kron(weights, w)
    return w
