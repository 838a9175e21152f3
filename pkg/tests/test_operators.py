import numpy as np
import pytest

from hofem.fespace import L2, FESpace, boundary_dofs
from hofem.mesh import make_cartesian_mesh, perturb_mesh, transform_mesh
from hofem.operators import (DIFFUSION, MASS, PAOperator, assemble_rhs, element_apply,
                             element_assemble, eliminate_bc, full_assemble, l2_error,
                             pa_apply, pa_diagonal, pa_setup)
from hofem.rng import SplitMix64, random_vector
from hofem.solvers import cg


def curved_mesh(dim=2, n=2):
    m = make_cartesian_mesh(dim, (n,) * dim, 2)

    def bend(X):
        return X + 0.04 * np.sin(np.pi * X[:, ::-1]) * np.prod(np.sin(np.pi * X), 1)[:, None]
    return perturb_mesh(transform_mesh(m, bend), 0.02 / n, seed=3)


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_mass_qdata_unit_element():
    fes = FESpace(make_cartesian_mesh(2, (1, 1), 1), 1)
    op = PAOperator(fes, MASS, q=2)
    np.testing.assert_allclose(op.qdata, [[0.25] * 4], atol=1e-16)
    assert op.qdata.sum() == pytest.approx(1.0, abs=1e-15)


def test_diffusion_qdata_scaled_element():
    m = make_cartesian_mesh(2, (1, 1), 1, extents=[(0, 2), (0, 1)])
    op = PAOperator(FESpace(m, 1), DIFFUSION, q=2)
    w = 0.25
    # packed (xx, xy, yy)
    np.testing.assert_allclose(op.qdata[0], [[w * 2 / 4, 0.0, w * 2]] * 4, atol=1e-15)


def test_storage_count():
    fes = FESpace(make_cartesian_mesh(3, (2, 2, 2), 1), 4)
    op = PAOperator(fes, DIFFUSION, q=6)
    assert op.storage() == 8 * 216 * 6 == 10368


def test_mass_of_constant_is_measure():
    m = make_cartesian_mesh(2, (3, 2), 1, extents=[(0, 2), (1, 4)])
    op = PAOperator(FESpace(m, 3), MASS)
    assert op.mult(np.ones(op.size)).sum() == pytest.approx(6.0, rel=1e-12)


def test_diffusion_kills_constants():
    op = PAOperator(FESpace(curved_mesh(), 3), DIFFUSION)
    y = op.mult(np.ones(op.size))
    assert np.abs(y).max() <= 1e-12 * np.abs(op.qdata).max()


def test_pa_matches_full_assembly_3x3_p3():
    fes = FESpace(make_cartesian_mesh(2, (3, 3), 1), 3)
    for kind in (MASS, DIFFUSION):
        op = PAOperator(fes, kind)
        x = random_vector(op.size, 1)
        assert rel(op.mult(x), full_assemble(op) @ x) <= 1e-12


def sweep():
    cases = []
    for dim in (2, 3):
        n = 4 if dim == 2 else 2
        for p in (1, 2, 3, 4):
            cases.append((dim, p, make_cartesian_mesh(dim, (n,) * dim, 1), False))
    cases.append((2, 3, curved_mesh(2, 3), False))
    cases.append((3, 2, curved_mesh(3, 2), True))
    return cases


@pytest.mark.parametrize("kind", [MASS, DIFFUSION])
@pytest.mark.parametrize("dim,p,mesh,bc", sweep(),
                         ids=lambda v: str(v) if isinstance(v, (int, bool)) else "mesh")
def test_assembly_levels_agree(kind, dim, p, mesh, bc):
    fes = FESpace(mesh, p)
    ess = boundary_dofs(fes) if bc else None
    op = PAOperator(fes, kind, coefficient=lambda X: 1 + X[:, 0] ** 2, essential_dofs=ess)
    A = full_assemble(op)
    Ae = element_assemble(op)
    for s in range(3):
        x = random_vector(op.size, s)
        y_pa, y_ea, y_fa = pa_apply(op, x), element_apply(op, Ae, x), A @ x
        assert rel(y_pa, y_fa) <= 1e-12 and rel(y_ea, y_fa) <= 1e-12
    assert rel(pa_diagonal(op), A.diagonal()) <= 1e-13


def test_unit_element_mass_diagonal():
    op = PAOperator(FESpace(make_cartesian_mesh(2, (1, 1), 1), 1), MASS, q=2)
    np.testing.assert_allclose(op.diagonal(), [1 / 9] * 4, atol=1e-16)


def test_essential_diagonal_is_one():
    fes = FESpace(make_cartesian_mesh(2, (2, 2), 1), 2)
    ess = boundary_dofs(fes)
    d = PAOperator(fes, DIFFUSION, essential_dofs=ess).diagonal()
    assert np.all(d[ess] == 1.0)


@pytest.mark.parametrize("kind", [MASS, DIFFUSION])
def test_element_matrix_spd(kind):
    op = PAOperator(FESpace(make_cartesian_mesh(2, (1, 1), 1, extents=[(0, 2), (0, 1)]), 3),
                    kind)
    Ae = element_assemble(op)[0]
    assert np.abs(Ae - Ae.T).max() <= 1e-14 * np.abs(Ae).max()
    ev = np.linalg.eigvalsh(Ae)
    if kind == MASS:
        assert ev.min() > 0
    else:
        assert ev.min() > -1e-12 * ev.max()


def test_full_mass_2x2():
    op = PAOperator(FESpace(make_cartesian_mesh(2, (2, 2), 1), 1), MASS)
    A = full_assemble(op)
    assert A.shape == (9, 9)
    assert A.sum() == pytest.approx(1.0, rel=1e-13)


@pytest.mark.parametrize("kind", [MASS, DIFFUSION])
def test_symmetry_and_semidefiniteness(kind):
    op = PAOperator(FESpace(curved_mesh(), 3), kind)
    A = full_assemble(op)
    assert abs(A - A.T).max() <= 1e-14 * abs(A).max()
    g = SplitMix64(9)
    X = g.normal((100, op.size))
    quad = np.array([x @ op.mult(x) for x in X])
    assert np.all(quad > 0) if kind == MASS else np.all(quad >= -1e-12)
    x, y = X[0], X[1]
    normA = abs(A).sum(axis=1).max()
    assert abs(op.mult(x) @ y - x @ op.mult(y)) <= 1e-12 * normA * np.linalg.norm(x) * \
        np.linalg.norm(y)


def test_matrix_free_mass_level():
    op = PAOperator(FESpace(curved_mesh(), 2), MASS)
    x = random_vector(op.size, 4)
    assert rel(pa_apply(op, x, matrix_free=True), pa_apply(op, x)) <= 1e-14
    with pytest.raises(ValueError):
        PAOperator(op.fes, DIFFUSION).mult(x, matrix_free=True)


def test_vector_and_l2_spaces():
    m = make_cartesian_mesh(2, (2, 2), 1)
    for fes in (FESpace(m, 2, vdim=2), FESpace(m, 2, continuity=L2)):
        op = PAOperator(fes, MASS)
        x = random_vector(op.size, 2)
        assert rel(op.mult(x), full_assemble(op) @ x) <= 1e-13


@pytest.mark.parametrize("dim", [2, 3])
def test_sum_factorization_flop_scaling(dim):
    """Per-element contraction work grows like p^(dim+1), not p^(2 dim)."""
    mesh = make_cartesian_mesh(dim, (1,) * dim, 1)
    orders = [2, 4, 6, 8] if dim == 2 else [2, 4, 6]
    flops = [PAOperator(FESpace(mesh, p), DIFFUSION).apply_flops() for p in orders]
    for p, f in zip(orders, flops):
        n1, q = p + 1, p + 2
        # dim gradients forward and dim divergence terms back, one axis at a time
        assert f == 2 * dim * sum(n1 ** (dim - k) * q ** (k + 1) for k in range(dim))
        if p >= 4:
            assert f < 2 * dim * n1 ** dim * q ** dim  # dense element matvecs
    # cost per p^(dim+1) stays bounded while the dense cost per p^(dim+1) keeps growing
    scaled = [f / (p + 1) ** (dim + 1) for p, f in zip(orders, flops)]
    assert max(scaled) / min(scaled) <= 1.5


def test_eliminate_homogeneous_bc():
    fes = FESpace(make_cartesian_mesh(2, (2, 2), 1), 2)
    ess = boundary_dofs(fes)
    op = PAOperator(fes, DIFFUSION, essential_dofs=ess)
    b = random_vector(op.size, 0)
    out = eliminate_bc(op, ess, np.zeros(op.size), b)
    expected = b.copy()
    expected[ess] = 0.0
    np.testing.assert_array_equal(out, expected)
    # the sparse-matrix path agrees
    out2 = eliminate_bc(full_assemble(op, constrained=False), ess, np.zeros(op.size), b)
    np.testing.assert_array_equal(out2, expected)


def test_linear_exactness():
    fes = FESpace(make_cartesian_mesh(2, (3, 3), 1), 2)
    ess = boundary_dofs(fes)
    op = pa_setup(fes, DIFFUSION, essential_dofs=ess)
    x_bc = fes.interpolate(lambda X: X[:, 0])
    b = eliminate_bc(op, ess, x_bc, np.zeros(op.size))
    u, stats = cg(op, b, rel_tol=1e-14, max_iter=500)
    assert stats.converged
    np.testing.assert_allclose(u, fes.dof_coords()[:, 0], atol=1e-12)
    assert l2_error(fes, u, lambda X: X[:, 0]) <= 1e-12


def test_rhs_integrates_forcing():
    fes = FESpace(make_cartesian_mesh(2, (2, 3), 1), 2)
    b = assemble_rhs(fes, lambda X: X[:, 0] * X[:, 1])
    assert b.sum() == pytest.approx(0.25, rel=1e-13)


def test_essential_index_checked():
    fes = FESpace(make_cartesian_mesh(2, (1, 1), 1), 1)
    with pytest.raises(IndexError):
        PAOperator(fes, MASS, essential_dofs=[4])
    with pytest.raises(ValueError):
        PAOperator(fes, "advection")
