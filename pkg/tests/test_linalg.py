import numpy as np
import pytest
import scipy.sparse as sp

from dmpfem.assemble import ZERO, ZERO_VECTOR, ProblemSpec
from dmpfem.bench import rotating_profile_problem
from dmpfem.linalg import (DenseCapError, Factorization, check_m_matrix,
                           check_nonnegative_type, read_matrix, solve,
                           verify_steady_global_dmp, verify_steady_local_dmp,
                           verify_transient_conditions, write_matrix,
                           zero_row_sums)
from dmpfem.mesh import generate_unit_square
from dmpfem.steady import galerkin, tabata_upwind
from dmpfem.transient import (TimeSteppingConfig, build_operators,
                              theta_matrices)

T = np.array([[2.0, -1.0], [-1.0, 2.0]])


def test_solve_identity_and_small():
    b = np.array([3.0, -4.0, 5.0])
    np.testing.assert_array_equal(solve(sp.eye(3, format="csr"), b), b)
    np.testing.assert_allclose(solve(sp.csr_matrix(T), [1.0, 1.0]), [1, 1],
                               atol=1e-15)


def test_solve_random_spd(rng):
    X = rng.normal(size=(50, 50))
    A = X @ X.T + 50 * np.eye(50)
    b = rng.normal(size=50)
    x = solve(sp.csr_matrix(A), b)
    assert np.abs(x - np.linalg.solve(A, b)).max() <= 1e-10
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_solve_iterative_path(rng):
    m = generate_unit_square(4)
    from dmpfem.assemble import assemble_diffusion, assemble_mass
    A = (assemble_diffusion(m) + assemble_mass(m)[0]).tocsr()
    b = rng.normal(size=m.n_nodes)
    x = solve(A, b, iterative_threshold=10)
    assert np.linalg.norm(A @ x - b) <= 1e-8 * np.linalg.norm(b)


def test_singular_reported():
    with pytest.raises(Exception):
        solve(sp.csr_matrix(np.zeros((2, 2))), [1.0, 1.0])


def test_factorization_reuse(rng):
    A = sp.csr_matrix(T)
    f = Factorization(A)
    for _ in range(3):
        b = rng.normal(size=2)
        np.testing.assert_allclose(T @ f.solve(b), b, atol=1e-14)


def test_nonnegative_type_examples():
    c = check_nonnegative_type(T, 2)
    assert c.passed and c.details["nn1_offdiag_nonpositive"]
    c = check_nonnegative_type(np.array([[2.0, 0.1], [-1.0, 2.0]]), 2)
    assert not c.passed
    assert (0, 1) in [(r, k) for r, k, _ in c.violations]
    c = check_nonnegative_type(np.array([[1.0, -2.0], [0.0, 1.0]]), 1)
    assert c.details["nn1_offdiag_nonpositive"]
    assert not c.details["nn2_rowsum_nonnegative"]


def test_sign_tolerance_ignores_roundoff():
    A = np.array([[2.0, 1e-15], [-1.0, 2.0]])
    assert check_nonnegative_type(A, 2).passed


def test_zero_row_sums():
    A = np.array([[1.0, -1.0], [-1.0, 3.0]])
    assert zero_row_sums(A, 1)
    assert not zero_row_sums(A, 2)


def test_m_matrix_examples():
    c = check_m_matrix(T)
    assert c.passed
    assert c.details["min_inverse_entry"] == pytest.approx(1 / 3)
    B = np.array([[1.0, 1.0], [0.0, 1.0]])
    assert not check_m_matrix(B).passed
    assert not check_m_matrix(B, monotone_only=True).passed


def test_monotone_without_sign_condition():
    # positive off-diagonal but non-negative inverse
    A = 0.5 * np.array([[1.0, -1.0, 1.0], [1.0, 1.0, -1.0], [-1.0, 1.0, 1.0]])
    assert np.linalg.inv(A).min() >= 0
    assert check_m_matrix(A, monotone_only=True).passed
    assert not check_m_matrix(A).passed


def test_dense_cap_refused():
    with pytest.raises(DenseCapError):
        check_m_matrix(sp.eye(11, format="csr"), cap=10)
    with pytest.raises(DenseCapError):
        verify_transient_conditions(sp.eye(11), sp.eye(11), 11, cap=10)


def test_nonnegative_type_implies_m_matrix(rng):
    for _ in range(20):
        n = 8
        A = -rng.random((n, n)) * (rng.random((n, n)) < 0.4)
        np.fill_diagonal(A, 0)
        np.fill_diagonal(A, -A.sum(axis=1) + rng.random(n) + 0.1)
        assert check_nonnegative_type(A, n).passed
        assert check_m_matrix(A).passed


def _laplace_system(n=6):
    A = 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    A[-1] = 0
    A[-1, -1] = 1
    A[0] = 0
    A[0, 0] = 1
    # Dirichlet rows last: move node 0 to the end
    perm = list(range(1, n)) + [0]
    return A[np.ix_(perm, perm)], n - 2


def test_local_and_global_dmp_constant():
    A, M = _laplace_system()
    u = np.full(len(A), 0.7)
    assert verify_steady_local_dmp(A, u, np.zeros(len(A)), M).passed
    assert verify_steady_global_dmp(A, u, np.zeros(len(A)), M).passed


def test_local_and_global_dmp_spike():
    A, M = _laplace_system()
    u = np.zeros(len(A))
    u[2] = 1.0
    f = np.zeros(len(A))
    loc = verify_steady_local_dmp(A, u, f, M)
    assert not loc.passed and loc.violations[0][0] == 2
    assert not verify_steady_global_dmp(A, u, f, M).passed


def test_global_dmp_random_rhs_sign(rng):
    A, M = _laplace_system(8)
    A[:M, :M] += np.diag(rng.random(M))   # positive row sums, still monotone
    assert check_m_matrix(A, monotone_only=True).passed
    for _ in range(100):
        s = rng.choice([-1.0, 1.0])
        f = np.zeros(len(A))
        f[:M] = s * rng.random(M)
        f[M:] = rng.normal(size=len(A) - M)
        u = np.linalg.solve(A, f)
        assert verify_steady_global_dmp(A, u, f, M).passed


def test_dmp_scheme_comparison_level6():
    bench = rotating_profile_problem()
    m = bench.mesh(6)
    gal, up = galerkin(bench.problem, m), tabata_upwind(bench.problem, m)
    f = np.zeros(m.n_nodes)
    assert not verify_steady_local_dmp(gal.system, gal.solution, f).passed
    assert not verify_steady_global_dmp(gal.system, gal.solution, f).passed
    assert verify_steady_local_dmp(up.system, up.solution, f).passed
    assert verify_steady_global_dmp(up.system, up.solution, f).passed


def test_transient_identity_scheme():
    Ml = sp.diags([1.0, 2.0, 3.0])
    c = verify_transient_conditions(Ml, Ml, 2)
    assert c.passed
    assert all(c.details[k] for k in ("cond_rhs", "cond_bdry", "cond_rows"))


def _heat_ops(level=3):
    m = generate_unit_square(level)
    prob = ProblemSpec(epsilon=1.0, b=ZERO_VECTOR, g=ZERO)
    return build_operators(prob, m)


def test_transient_heat_implicit_lumped_passes():
    ops = _heat_ops()
    cfg = TimeSteppingConfig(theta=1.0, tau=1e-2, scheme="low-order")
    B, K = theta_matrices(ops, cfg)
    c = verify_transient_conditions(B, K, ops.n_free)
    assert c.passed and c.details["positivity_preserving"]


def test_transient_consistent_explicit_fails():
    ops = _heat_ops()
    cfg = TimeSteppingConfig(theta=0.0, tau=1e-4, scheme="galerkin-theta")
    B, K = theta_matrices(ops, cfg, mass="consistent", stiffness="galerkin")
    c = verify_transient_conditions(B, K, ops.n_free)
    assert not c.passed and not c.details["cond_rhs"]


def test_matrix_market_roundtrip(tmp_path, rng):
    A = sp.random(7, 7, density=0.4, random_state=1, format="csr")
    p = tmp_path / "a.mtx"
    write_matrix(A, p)
    B = read_matrix(p)
    assert abs(A - B).max() == 0
