"""One-dimensional nodal bases and quadrature on the reference interval [0, 1].

Gauss-Lobatto nodes are the endpoints plus the roots of the derivative of the
Legendre polynomial P_p; Gauss-Legendre points are the roots of P_q. Roots are
found by safeguarded Newton iteration inside sign-change brackets, so results
depend on nothing but the degree.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

NEWTON_TOL = 1e-15
NEWTON_MAXIT = 100


def legendre(n, x):
    """Return ``(P_n(x), P_n'(x))`` on [-1, 1] by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    p0 = np.ones_like(x)
    if n == 0:
        return p0, np.zeros_like(x)
    p1 = x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    # derivative from n (x P_n - P_{n-1}) = (x^2 - 1) P_n'; only used off the endpoints
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = n * (x * p1 - p0) / (x * x - 1.0)
    end = np.abs(np.abs(x) - 1.0) == 0.0
    if np.any(end):
        dp = np.where(end, np.sign(x) ** (n + 1) * n * (n + 1) / 2.0, dp)
    return p1, dp


def _legendre_d2(n, x):
    """P_n'(x) and P_n''(x) from the Legendre ODE, valid for |x| < 1."""
    p, dp = legendre(n, x)
    d2p = (2.0 * x * dp - n * (n + 1) * p) / (1.0 - x * x)
    return dp, d2p


def _bracketed_roots(f_and_df, nroots):
    """Roots in (-1, 0] of a function with ``nroots`` simple roots in (-1, 1).

    Brackets come from sign changes on a grid uniform in angle; each bracket is
    refined by Newton steps that fall back to bisection when they leave it.
    """
    if nroots == 0:
        return np.zeros(0)
    m = 8 * (nroots + 2)
    grid = -np.cos(np.pi * np.arange(1, m) / m)
    grid = grid[grid <= 0.0]
    if grid[-1] != 0.0:
        grid = np.append(grid, 0.0)
    vals = f_and_df(grid)[0]
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fb == 0.0 and b == 0.0:
            roots.append(0.0)
            continue
        if fa == 0.0:
            roots.append(a)
            continue
        if fa * fb > 0.0:
            continue
        lo, hi, flo = a, b, fa
        x = 0.5 * (lo + hi)
        for _ in range(NEWTON_MAXIT):
            f, df = (float(v[0]) for v in f_and_df(np.array([x])))
            if f == 0.0:
                break
            if (f < 0.0) == (flo < 0.0):
                lo, flo = x, f
            else:
                hi = x
            xn = x - f / df if df != 0.0 else 0.5 * (lo + hi)
            if not lo < xn < hi:
                xn = 0.5 * (lo + hi)
            if abs(xn - x) <= NEWTON_TOL:
                # one polishing step, kept only if it stays inside the bracket
                f, df = (float(v[0]) for v in f_and_df(np.array([xn])))
                xp = xn - f / df if df != 0.0 else xn
                x = xp if lo <= xp <= hi else xn
                break
            x = xn
        roots.append(x)
    return np.array(roots)


def _symmetric(left, n):
    """Assemble ``n`` points on [-1, 1] from the non-positive half ``left``."""
    pts = np.empty(n)
    h = len(left)
    pts[:h] = left
    pts[n - h:] = -left[::-1]
    if n % 2 == 1:
        pts[n // 2] = 0.0
    return pts


@lru_cache(maxsize=None)
def _gll_ref(p):
    if p < 1:
        raise ValueError(f"Gauss-Lobatto nodes need degree p >= 1, got {p}")
    interior = _bracketed_roots(lambda x: _legendre_d2(p, x), p - 1)
    interior = interior[interior < 0.0]
    left = np.concatenate([[-1.0], interior])
    return _symmetric(left, p + 1)


@lru_cache(maxsize=None)
def _gauss_ref(q):
    if q < 1:
        raise ValueError(f"Gauss quadrature needs q >= 1 points, got {q}")
    roots = _bracketed_roots(lambda x: legendre(q, x), q)
    roots = roots[roots < 0.0]
    x = _symmetric(roots, q)
    _, dp = legendre(q, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    w = 0.5 * (w + w[::-1])
    return x, w


def gll_nodes(p):
    """The p+1 Gauss-Lobatto points on [0, 1], ascending, with exact endpoints."""
    x = 0.5 * (_gll_ref(p) + 1.0)
    x[0], x[-1] = 0.0, 1.0
    if p % 2 == 0:
        x[p // 2] = 0.5
    return x


def gauss_quadrature(q):
    """q-point Gauss-Legendre rule on [0, 1]; exact through degree 2q-1.

    Returns
    -------
    points, weights : ndarray
    """
    x, w = _gauss_ref(q)
    pts = 0.5 * (x + 1.0)
    if q % 2 == 1:
        pts[q // 2] = 0.5
    return pts, 0.5 * w


def barycentric_weights(nodes):
    nodes = np.asarray(nodes, dtype=float)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def differentiation_matrix(nodes):
    """D[i, j] = l_j'(x_i) for the Lagrange basis on ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    w = barycentric_weights(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def lagrange_eval(nodes, x):
    """Values of every Lagrange polynomial on ``nodes`` at points ``x``.

    Uses the second (true) barycentric form; rows at a node are unit vectors.
    Returns an array of shape ``(len(x), len(nodes))``.
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = barycentric_weights(nodes)
    diff = x[:, None] - nodes[None, :]
    # below this distance w / diff can overflow; the node value is exact there
    exact = np.abs(diff) < 1e-290
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = w[None, :] / diff
        L = t / t.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    if np.any(hit):
        L[hit] = exact[hit].astype(float)
    return L


def lagrange_eval_deriv(nodes, x):
    """Values and first derivatives of the Lagrange basis at ``x``."""
    L = lagrange_eval(nodes, x)
    return L, L @ differentiation_matrix(nodes)


@dataclass(frozen=True)
class Basis1D:
    """Degree-p Gauss-Lobatto nodal basis tabulated at q Gauss points.

    ``B[k, i]`` is basis function i at quadrature point k and ``G[k, i]`` its
    derivative. These are the 1D factors of the element interpolation operator.
    """

    p: int
    nodes: np.ndarray
    quad_points: np.ndarray
    quad_weights: np.ndarray
    B: np.ndarray
    G: np.ndarray

    @property
    def q(self):
        return len(self.quad_points)

    @property
    def ndof(self):
        return self.p + 1


@lru_cache(maxsize=None)
def tabulate(p, q=None):
    """Build the :class:`Basis1D` of degree ``p`` with ``q`` Gauss points.

    ``q`` defaults to ``p + 2``. Results are cached; arrays are read-only.
    """
    if p < 1:
        raise ValueError(f"degree must be >= 1, got {p}")
    if q is None:
        q = p + 2
    if q < 1:
        raise ValueError(f"quadrature size must be >= 1, got {q}")
    nodes = gll_nodes(p)
    pts, wts = gauss_quadrature(q)
    B, G = lagrange_eval_deriv(nodes, pts)
    for a in (nodes, pts, wts, B, G):
        a.setflags(write=False)
    return Basis1D(p, nodes, pts, wts, B, G)
