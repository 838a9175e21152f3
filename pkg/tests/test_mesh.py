import numpy as np
import pytest

from hofem.basis import gll_nodes
from hofem.mesh import (InvalidMeshError, geometric_factors, lor_refine, make_cartesian_mesh,
                        map_reference, perturb_mesh, refine_uniform, transform_mesh)
from hofem.rng import SplitMix64


def curved(mesh, amp=0.05):
    """Smooth bend that keeps the unit square's boundary in place."""
    def f(X):
        s = np.prod(np.sin(np.pi * X), axis=1)
        return X + amp * s[:, None] * np.roll(np.cos(np.pi * X), 1, axis=1)
    return transform_mesh(mesh, f)


def test_single_element_corners():
    m = make_cartesian_mesh(2, (1, 1), 1)
    assert m.num_elements == 1 and m.num_nodes == 4
    np.testing.assert_array_equal(m.nodes, [[0, 0], [1, 0], [0, 1], [1, 1]])


def test_node_count_high_order():
    m = make_cartesian_mesh(2, (2, 2), 3)
    assert m.num_elements == 4 and m.num_nodes == 49


def test_two_unit_cubes():
    m = make_cartesian_mesh(3, (2, 1, 1), 1, extents=[(0, 2), (0, 1), (0, 1)])
    assert m.num_elements == 2 and m.num_nodes == 12
    assert m.measure() == pytest.approx(2.0, rel=1e-14)


@pytest.mark.parametrize("kwargs", [dict(counts=(0, 1)), dict(counts=(1,)),
                                    dict(counts=(1, 1), geom_order=0),
                                    dict(counts=(1, 1), extents=[(0, 0), (0, 1)])])
def test_invalid_construction(kwargs):
    with pytest.raises(ValueError):
        make_cartesian_mesh(2, **kwargs)


def test_refine_counts_and_lattice():
    m = make_cartesian_mesh(2, (2, 2), 1)
    r = refine_uniform(m)
    assert r.num_elements == 16
    r2 = refine_uniform(r)
    # nodes on the 4x finer lattice exactly
    assert np.array_equal(r2.nodes * 8, np.round(r2.nodes * 8))
    assert r2.measure() == m.measure()


def test_refine_curved_matches_parent_map():
    m = curved(make_cartesian_mesh(2, (2, 2), 2))
    r = refine_uniform(m)
    g = SplitMix64(5)
    xi = g.random((100, 2))
    parent = (g.random(100) * 4).astype(int)
    err = 0.0
    for k in range(100):
        e = parent[k]
        ex, ey = e % 2, e // 2
        Xp, _ = map_reference(m, xi[k:k + 1], [e])
        bits = (xi[k] >= 0.5).astype(int)
        child = (2 * ex + bits[0]) + 4 * (2 * ey + bits[1])
        Xc, _ = map_reference(r, 2 * xi[k:k + 1] - bits, [child])
        err = max(err, np.abs(Xp - Xc).max())
    assert err <= 1e-14


def test_lor_counts():
    m = make_cartesian_mesh(2, (2, 2), 1)
    lor = lor_refine(m, 3)
    assert lor.counts == (6, 6) and lor.num_nodes == 49


def test_lor_p2_equal_halves():
    lor = lor_refine(make_cartesian_mesh(2, (1, 1), 1), 2)
    xs = np.unique(lor.nodes[:, 0])
    np.testing.assert_allclose(np.diff(xs), [0.5, 0.5], atol=1e-16)


def test_lor_p4_gll_boundaries():
    lor = lor_refine(make_cartesian_mesh(2, (1, 1), 1), 4)
    r = np.sqrt(3 / 7)
    np.testing.assert_allclose(lor.nodes[:5, 0], [0, (1 - r) / 2, 0.5, (1 + r) / 2, 1],
                               atol=1e-15)


def test_lor_reports_parent_of_inverted_subelement():
    m = make_cartesian_mesh(2, (2, 1), 2)
    nodes = np.array(m.nodes)
    # drag the midpoint node of element 1 past its edge
    nodes[m.element_node_ids()[1][4]] += [0.6, 0.0]
    bad = m.with_nodes(nodes)
    with pytest.raises(InvalidMeshError) as exc:
        lor_refine(bad, 4)
    assert exc.value.element in (0, 1)


def test_identity_jacobian():
    g = geometric_factors(make_cartesian_mesh(2, (1, 1), 1), 3)
    np.testing.assert_allclose(g.J, np.broadcast_to(np.eye(2), g.J.shape), atol=1e-15)
    np.testing.assert_allclose(g.detJ, 1.0, atol=1e-15)


def test_scaled_jacobian():
    m = make_cartesian_mesh(2, (1, 1), 1, extents=[(0, 2), (0, 1)])
    g = geometric_factors(m, 2)
    np.testing.assert_allclose(g.J, np.broadcast_to(np.diag([2.0, 1.0]), g.J.shape), atol=1e-15)
    np.testing.assert_allclose(g.detJ, 2.0)


def test_jacobian_matches_finite_differences():
    m = perturb_mesh(make_cartesian_mesh(2, (3, 3), 2), 0.03, seed=11)
    xi = SplitMix64(1).uniform(0.1, 0.9, (20, 2))
    _, J = map_reference(m, xi)
    h = 1e-6
    fd = np.empty_like(J)
    for d in range(2):
        e = np.zeros(2)
        e[d] = h
        Xp, _ = map_reference(m, xi + e)
        Xm, _ = map_reference(m, xi - e)
        fd[..., d] = (Xp - Xm) / (2 * h)
    det, det_fd = np.linalg.det(J), np.linalg.det(fd)
    assert np.max(np.abs(det - det_fd) / np.abs(det)) <= 1e-6


@pytest.mark.parametrize("dim,counts,q", [(2, (3, 2), 2), (2, (4, 4), 5), (3, (2, 3, 1), 3)])
def test_quadrature_measure(dim, counts, q):
    ext = [(0, 1.5), (-1, 2), (0, 0.5)][:dim]
    m = make_cartesian_mesh(dim, counts, 1, extents=ext)
    g = geometric_factors(m, q)
    exact = np.prod([hi - lo for lo, hi in ext])
    assert abs((g.weights * g.detJ).sum() - exact) <= 1e-12 * exact


def test_inverted_element_named():
    m = make_cartesian_mesh(2, (2, 1), 1)
    nodes = np.array(m.nodes)
    nodes[1] = [1.2, 0.0]  # shared bottom vertex pushed past the right corner
    with pytest.raises(InvalidMeshError) as exc:
        geometric_factors(m.with_nodes(nodes), 2)
    assert exc.value.element == 1
    assert exc.value.point is not None


def test_periodic_mesh_keeps_full_lattice():
    m = make_cartesian_mesh(2, (4, 4), 2, periodic=(True, True))
    assert m.num_nodes == 81 and m.periodic == (True, True)
    np.testing.assert_allclose(np.unique(m.nodes[:, 0])[[0, -1]], [0, 1])


def test_gll_node_placement_in_elements():
    m = make_cartesian_mesh(2, (1, 1), 3)
    np.testing.assert_allclose(np.unique(m.nodes[:, 0]), gll_nodes(3), atol=1e-16)
