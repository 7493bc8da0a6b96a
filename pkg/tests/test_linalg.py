import math

import numpy as np
import pytest
import scipy.integrate as si
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from cusplab.linalg import (
    EigenPairSet,
    EigenSolveError,
    NotPositiveDefiniteError,
    QuadratureError,
    SparseSymmetricForm,
    adaptive_quad,
    as_form,
    check_positive_definite,
    pencil_digest,
    rayleigh_min,
    solve_generalized,
)


def fd_neumann(n):
    """Cell-centred finite differences for -u'' on [0,1] with Neumann ends, and the diagonal mass."""
    h = 1.0 / n
    main = np.full(n, 2.0)
    main[[0, -1]] = 1.0
    A = sp.diags([main, -np.ones(n - 1), -np.ones(n - 1)], [0, 1, -1]) / h
    B = sp.identity(n) * h
    return A.tocsr(), B.tocsr()


def spd(n, rng, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q @ np.diag(np.linspace(1, cond, n)) @ Q.T


# -- forms -------------------------------------------------------------------


def test_form_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        SparseSymmetricForm(sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 1.0]])))


def test_form_rejects_nonfinite_diagonal():
    with pytest.raises(ValueError, match="non-finite"):
        SparseSymmetricForm(sp.csr_matrix(np.array([[np.inf, 0.0], [0.0, 1.0]])))


def test_form_from_triplets_sums_duplicates():
    f = SparseSymmetricForm.from_triplets([0, 0, 1], [0, 0, 1], [1.0, 2.0, 5.0], 2)
    assert f.matrix.toarray().tolist() == [[3.0, 0.0], [0.0, 5.0]]


@given(st.integers(2, 12), st.integers(0, 10**6))
def test_quadratic_matches_dense(n, seed):
    rng = np.random.default_rng(seed)
    M = spd(n, rng)
    u = rng.standard_normal(n)
    f = as_form(sp.csr_matrix(M))
    assert f.quadratic(u) == pytest.approx(u @ M @ u, rel=1e-12, abs=1e-12)
    assert f(u) == pytest.approx(u @ M @ u, rel=1e-12, abs=1e-12)


def test_digest_depends_on_values():
    a = as_form(np.eye(3))
    b = as_form(2 * np.eye(3))
    assert a.digest() != b.digest()
    assert a.digest() == as_form(np.eye(3)).digest()
    assert pencil_digest(a, b, 3) != pencil_digest(a, b, 4)


# -- eigensolver ---------------------------------------------------------------


def test_diagonal_problem():
    E = solve_generalized(np.diag([1.0, 2.0, 3.0]), np.eye(3), 2)
    assert np.allclose(E.eigenvalues, [1.0, 2.0])


def test_identity_pencil(rng):
    B = spd(30, rng)
    E = solve_generalized(B, B, 5)
    assert np.allclose(E.eigenvalues, 1.0, atol=1e-10)


def test_fd_neumann_first_eigenvalue_sparse_and_dense_agree():
    # the dense generalized solver on the same matrices is the oracle
    A, B = fd_neumann(100)
    E = solve_generalized(A, B, 3)
    ref = sla.eigh(A.toarray(), B.toarray(), eigvals_only=True)[:3]
    assert np.allclose(E.eigenvalues, ref, rtol=1e-9, atol=1e-9)
    assert abs(E.eigenvalues[1] - math.pi**2) / math.pi**2 < 1e-3
    assert abs(E.eigenvalues[0]) < 1e-8


def test_large_sparse_path_matches_dense():
    A, B = fd_neumann(1500)
    E = solve_generalized(A, B, 6, seed=3)
    ref = sla.eigh(A.toarray(), B.toarray(), eigvals_only=True, subset_by_index=[0, 5])
    assert np.allclose(E.eigenvalues, ref, rtol=1e-8, atol=1e-8)
    assert np.all(E.residuals(A, B) <= 1e-8)
    assert E.orthonormality_defect(B) <= 1e-7
    assert E.meta["dimension"] == 1500 and not E.complete


def test_deterministic_for_fixed_seed():
    A, B = fd_neumann(800)
    E1 = solve_generalized(A, B, 4, seed=7)
    E2 = solve_generalized(A, B, 4, seed=7)
    assert np.array_equal(E1.eigenvalues, E2.eigenvalues)
    assert np.array_equal(E1.vectors, E2.vectors)


def test_full_spectrum_is_complete(rng):
    A = spd(12, rng)
    E = solve_generalized(A, np.eye(12), 12)
    assert E.complete
    assert np.allclose(E.eigenvalues, np.linalg.eigvalsh(A))


def test_indefinite_B_rejected():
    with pytest.raises(NotPositiveDefiniteError):
        solve_generalized(np.eye(3), np.diag([1.0, -1.0, 1.0]), 1)
    with pytest.raises(NotPositiveDefiniteError):
        check_positive_definite(sp.diags([1.0] * 500 + [-1.0]).tocsr())


def test_negative_A_rejected():
    with pytest.raises(NotPositiveDefiniteError):
        solve_generalized(np.diag([-5.0, 1.0, 2.0]), np.eye(3), 1)


def test_k_out_of_range():
    with pytest.raises(ValueError):
        solve_generalized(np.eye(3), np.eye(3), 4)


def test_unreachable_tolerance_reports_best_residual():
    A, B = fd_neumann(3000)
    with pytest.raises(EigenSolveError) as info:
        solve_generalized(A, B, 2, tol=1e-16)
    assert info.value.best_residual > 1e-16


@given(st.integers(5, 40), st.integers(0, 10**6))
def test_spectrum_invariant_under_permutation(n, seed):
    rng = np.random.default_rng(seed)
    A, B = spd(n, rng, 50.0), spd(n, rng, 3.0)
    k = min(4, n)
    E = solve_generalized(A, B, k)
    perm = rng.permutation(n)
    Ep = solve_generalized(as_form(A).permuted(perm), as_form(B).permuted(perm), k)
    assert np.allclose(E.eigenvalues, Ep.eigenvalues, rtol=10 * 1e-8, atol=10 * 1e-8)


@given(st.integers(3, 30), st.integers(0, 10**6))
def test_residual_and_orthonormality_per_pair(n, seed):
    rng = np.random.default_rng(seed)
    A, B = spd(n, rng, 100.0), spd(n, rng, 5.0)
    E = solve_generalized(A, B, min(3, n), tol=1e-8)
    assert np.all(E.residuals(A, B) <= 1e-8)
    assert E.orthonormality_defect(B) <= 10 * 1e-8
    assert np.all(np.diff(E.eigenvalues) >= 0)


def test_rayleigh_min_examples():
    assert rayleigh_min(np.diag([5.0, 7.0]), np.eye(2)) == pytest.approx(5.0)
    B = spd(6, np.random.default_rng(1))
    assert rayleigh_min(B, B) == pytest.approx(1.0)


def test_rayleigh_min_below_random_quotients(rng):
    A, B = fd_neumann(600)
    A = A + B
    r = rayleigh_min(A, B)
    V = rng.standard_normal((600, 100))
    q = np.einsum("ij,ij->j", V, A @ V) / np.einsum("ij,ij->j", V, B @ V)
    assert np.all(r <= q)
    assert r == pytest.approx(solve_generalized(A, B, 1).eigenvalues[0])


def test_eigenpairset_rejects_decreasing():
    with pytest.raises(ValueError):
        EigenPairSet(np.array([2.0, 1.0]), None, np.ones(2))


# -- quadrature --------------------------------------------------------------


def test_quad_trivial():
    r = adaptive_quad(lambda u: np.ones_like(u), 0.0, 1.0)
    assert r.value == pytest.approx(1.0, abs=1e-14)
    assert r.error_estimate >= 0 and r.evaluations > 0


def test_quad_endpoint_singularity():
    r = adaptive_quad(lambda u: u**-0.5, 0.0, 1.0, tol=1e-10)
    assert abs(r.value - 2.0) <= max(r.error_estimate, 1e-10)


def test_quad_half_infinite_against_quadpack():
    f = lambda u: 1.0 / (u * u * np.log(u))
    r = adaptive_quad(f, 2 * math.pi, math.inf, tol=1e-13, rtol=1e-13)
    # second integrator: QUADPACK on the log-substituted integrand e^-v / v
    ref, _ = si.quad(lambda v: math.exp(-v) / v, math.log(2 * math.pi), math.inf, epsabs=0, epsrel=1e-13, limit=200)
    assert abs(r.value - ref) / ref < 1e-8
    assert r.value == pytest.approx(0.06133502124949764, rel=1e-10)


def test_quad_reversed_limits():
    r = adaptive_quad(np.exp, 1.0, 0.0)
    assert r.value == pytest.approx(-(math.e - 1), rel=1e-13)


def test_quad_budget_exhaustion_carries_partial():
    with pytest.raises(QuadratureError) as info:
        adaptive_quad(lambda u: np.sin(1 / u) / u, 1e-6, 1.0, tol=1e-14, max_intervals=20)
    assert math.isfinite(info.value.partial.value)


@given(st.integers(0, 8), st.floats(0.1, 3.0))
def test_quad_polynomials_within_error_estimate(p, b):
    r = adaptive_quad(lambda u: u**p, 0.0, b, tol=1e-12)
    exact = b ** (p + 1) / (p + 1)
    assert abs(r.value - exact) <= max(r.error_estimate, 1e-12 * max(1.0, exact))


@given(st.floats(0.2, 5.0))
def test_quad_exponential_tail(a):
    r = adaptive_quad(lambda u: np.exp(-a * u), 0.0, math.inf, tol=1e-12)
    assert r.value == pytest.approx(1 / a, rel=1e-9)
