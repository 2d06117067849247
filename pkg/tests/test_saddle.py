import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from dimlink import assembly
from dimlink.mesh import Rect, boundary_nodes, build_rect_mesh, build_wire_mesh, select_region
from dimlink.saddle import (
    SingularSystemError,
    assemble_kkt,
    dense_solve,
    multiplier_balance,
    residuals,
    solve_saddle,
)


def linked_system(nx, ny, kappa=1.0, kappa_bar=10.0, n_seg=3, source=1.0):
    """Unit square, top=1/bottom=0, one wire between opposite corner boxes."""
    m = build_rect_mesh((0, 0), (1, 1), nx, ny)
    a = select_region(m, Rect((0, 0), (0.49, 0.49)))
    b = select_region(m, Rect((0.51, 0.51), (1, 1)))
    w = build_wire_mesh(0.7, n_seg)
    A = sp.block_diag([assembly.assemble_bulk(m, kappa), assembly.wire_stiffness(w, kappa_bar)]).tocsr()
    f = np.concatenate([assembly.assemble_load(m, source), np.zeros(w.n_nodes)])
    rows = assembly.build_constraints(m, [assembly.WireLink(a, b, m.n_nodes, w.n_nodes, "w")])
    B, g = assembly.constraint_matrix(rows, A.shape[0])
    bcs = [assembly.DirichletBC(boundary_nodes(m, "top"), 1.0), assembly.DirichletBC(boundary_nodes(m, "bottom"), 0.0)]
    red = assembly.apply_dirichlet(A, f, bcs, m.nodes, B, g)
    return red


def test_m_zero_is_plain_solve():
    A = sp.csr_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    sys = assemble_kkt(A, None, [1.0, 0.0], None)
    assert sys.m == 0 and (sys.K != A).nnz == 0
    sol = solve_saddle(sys)
    np.testing.assert_allclose(sol.u, [2 / 3, 1 / 3])
    assert sol.lam.size == 0


def test_three_by_three_hand_solution():
    sys = assemble_kkt(sp.eye(2), sp.csr_matrix([[1.0, 0.0]]), [1.0, 0.0], [0.0])
    sol = solve_saddle(sys)
    np.testing.assert_allclose(sol.u, [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(sol.lam, [1.0])


def test_kkt_structure():
    sys = assemble_kkt(sp.eye(3), sp.csr_matrix([[1.0, 1.0, 0.0], [0, 0, 1.0]]), np.zeros(3), np.zeros(2))
    K = sys.K.toarray()
    assert K.shape == (5, 5)
    np.testing.assert_array_equal(K[3:, 3:], 0.0)
    np.testing.assert_array_equal(K, K.T)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        assemble_kkt(sp.eye(3), sp.csr_matrix(np.ones((1, 2))), np.zeros(3), np.zeros(1))
    with pytest.raises(ValueError):
        assemble_kkt(sp.eye(3), None, np.zeros(2), None)


@pytest.mark.parametrize("nx", range(2, 9))
@pytest.mark.parametrize("ny", range(2, 9))
def test_sparse_matches_dense_kkt(nx, ny):
    red = linked_system(nx, ny)
    sys = assemble_kkt(red.A, red.B, red.f, red.g)
    sol = solve_saddle(sys)
    # reference: dense LU of the KKT matrix written out block by block
    Ad, Bd = red.A.toarray(), red.B.toarray()
    m = Bd.shape[0]
    K = np.block([[Ad, Bd.T], [Bd, np.zeros((m, m))]])
    x = sla.lu_solve(sla.lu_factor(K), np.concatenate([red.f, red.g]))
    u_ref, lam_ref = x[: sys.n], x[sys.n:]
    assert np.linalg.norm(sol.u - u_ref) <= 1e-8 * np.linalg.norm(u_ref)
    assert np.linalg.norm(sol.lam - lam_ref) <= 1e-8 * max(np.linalg.norm(lam_ref), 1e-300)
    u2, lam2 = dense_solve(sys)
    np.testing.assert_allclose(u2, u_ref, rtol=1e-10, atol=1e-12)


def test_minres_matches_direct():
    red = linked_system(8, 8)
    sys = assemble_kkt(red.A, red.B, red.f, red.g)
    d = solve_saddle(sys, method="direct")
    it = solve_saddle(sys, method="minres", tol=1e-12)
    assert it.method == "minres"
    np.testing.assert_allclose(it.u, d.u, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(it.lam, d.lam, rtol=1e-5, atol=1e-7)


def test_residuals_within_tolerance():
    red = linked_system(6, 6)
    sys = assemble_kkt(red.A, red.B, red.f, red.g)
    sol = solve_saddle(sys)
    r1, r2 = residuals(sys, sol.u, sol.lam)
    assert r1 <= 1e-10 and r2 <= 1e-10


def test_duplicated_constraint_is_rank_deficient():
    red = linked_system(4, 4)
    B = sp.vstack([red.B, red.B[0]]).tocsr()
    sys = assemble_kkt(red.A, B, red.f, np.concatenate([red.g, red.g[:1]]))
    with pytest.raises(SingularSystemError) as info:
        solve_saddle(sys)
    assert info.value.kind == "rank_deficient_constraints"
    assert info.value.indices == [2]


def test_unlinked_wire_is_unconstrained_kernel():
    m = build_rect_mesh((0, 0), (1, 1), 3, 3)
    w = build_wire_mesh(1.0, 4)
    A = sp.block_diag([assembly.assemble_bulk(m, 1.0), assembly.wire_stiffness(w, 5.0)]).tocsr()
    bcs = [assembly.DirichletBC(boundary_nodes(m, "top"), 1.0)]
    red = assembly.apply_dirichlet(A, np.zeros(A.shape[0]), bcs, m.nodes)
    with pytest.raises(SingularSystemError) as info:
        solve_saddle(assemble_kkt(red.A, red.B, red.f, red.g))
    assert info.value.kind == "unconstrained_kernel"
    assert len(info.value.indices) == w.n_nodes


def test_unknown_method():
    with pytest.raises(ValueError):
        solve_saddle(assemble_kkt(sp.eye(1), None, [1.0], None), method="cg")


def test_multiplier_balance_and_constant_solution():
    m = build_rect_mesh((0, 0), (1, 1), 6, 6)
    a = select_region(m, Rect((0.2, 0.2), (0.4, 0.4)))
    b = select_region(m, Rect((0.6, 0.6), (0.8, 0.8)))
    w = build_wire_mesh(0.5, 4)
    A = sp.block_diag([assembly.assemble_bulk(m, 1.0), assembly.wire_stiffness(w, 3.0)]).tocsr()
    rows = assembly.build_constraints(m, [assembly.WireLink(a, b, m.n_nodes, w.n_nodes, "w")])
    B, g = assembly.constraint_matrix(rows, A.shape[0])
    bcs = [assembly.DirichletBC(boundary_nodes(m, s), 300.0) for s in ("bottom", "right", "top", "left")]
    red = assembly.apply_dirichlet(A, np.zeros(A.shape[0]), bcs, m.nodes, B, g)
    sol = solve_saddle(assemble_kkt(red.A, red.B, red.f, red.g))
    np.testing.assert_allclose(red.expand(sol.u), 300.0, rtol=1e-12)
    np.testing.assert_allclose(sol.lam, 0.0, atol=1e-8)
    assert multiplier_balance(sol, 0) == pytest.approx(0.0, abs=1e-8)
    assert multiplier_balance(np.array([1.0, -1.0]), 0) == 0.0


def test_solution_deterministic():
    red = linked_system(7, 5)
    sys = assemble_kkt(red.A, red.B, red.f, red.g)
    a, b = solve_saddle(sys), solve_saddle(sys)
    assert np.array_equal(a.u, b.u) and np.array_equal(a.lam, b.lam)
