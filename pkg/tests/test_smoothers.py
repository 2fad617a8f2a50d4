import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from skinperm.errors import SolverError
from skinperm.solver import (GaussSeidelSmoother, ILU0, ILUSmoother, gauss_seidel_sweep,
                             ilu0_factor)

from conftest import laplacian_1d, laplacian_2d


def test_gs_identity():
    b = np.array([1.0, -2.0, 3.5])
    assert np.array_equal(gauss_seidel_sweep(sp.eye(3), np.zeros(3), b), b)


def test_gs_lower_triangular_exact():
    rng = np.random.default_rng(0)
    L = np.tril(rng.uniform(0.1, 1.0, (12, 12))) + 3 * np.eye(12)
    b = rng.normal(size=12)
    x = gauss_seidel_sweep(sp.csr_matrix(L), rng.normal(size=12), b)
    assert np.linalg.norm(L @ x - b) < 1e-12


def test_gs_monotone_on_laplacian():
    A = sp.csr_matrix(laplacian_1d(10))
    b = np.ones(10)
    x = np.zeros(10)
    res = [np.linalg.norm(b - A @ x)]
    for _ in range(50):
        x = gauss_seidel_sweep(A, x, b)
        res.append(np.linalg.norm(b - A @ x))
    assert all(r1 < r0 for r0, r1 in zip(res, res[1:]))


def test_gs_zero_diagonal():
    A = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 2.0]]))
    with pytest.raises(SolverError):
        gauss_seidel_sweep(A, np.zeros(2), np.ones(2))
    with pytest.raises(SolverError):
        GaussSeidelSmoother(A)


def test_ilu_tridiagonal_exact():
    A = sp.csr_matrix(laplacian_1d(15))
    L, U = ilu0_factor(A)
    assert abs(L @ U - A).max() < 1e-12
    assert np.allclose(L.diagonal(), 1.0)


def test_ilu_diagonal():
    A = sp.diags([2.0, 3.0, 5.0], format="csr")
    L, U = ilu0_factor(A)
    assert np.allclose(L.toarray(), np.eye(3)) and np.allclose(U.toarray(), A.toarray())


def test_ilu_matches_on_pattern_and_contracts():
    A = sp.csr_matrix(laplacian_2d(8))
    L, U = ilu0_factor(A)
    LU = (L @ U).tocsr()
    mask = A.copy()
    mask.data[:] = 1.0
    assert abs(LU.multiply(mask) - A).max() < 1e-12
    rng = np.random.default_rng(3)
    x_exact = rng.normal(size=64)
    b = A @ x_exact
    x = np.zeros(64)
    errs = [np.linalg.norm(x - x_exact)]
    smoother = ILUSmoother(A)
    for _ in range(5):
        smoother.smooth(x, b, 1)
        errs.append(np.linalg.norm(x - x_exact))
    rate = (errs[-1] / errs[0]) ** (1 / 5)
    assert rate < 0.9


def test_ilu_zero_pivot():
    A = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SolverError):
        ILU0(A)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(3, 30))
def test_ordered_smoother_matches_permuted_system(seed, n):
    rng = np.random.default_rng(seed)
    A = sp.csr_matrix(laplacian_1d(n) + np.diag(rng.uniform(0, 1, n)))
    order = rng.permutation(n)
    b = rng.normal(size=n)
    x = GaussSeidelSmoother(A, order).smooth(np.zeros(n), b, 1)
    P = np.eye(n)[order]
    xp = GaussSeidelSmoother(sp.csr_matrix(P @ A.toarray() @ P.T)).smooth(np.zeros(n), P @ b, 1)
    assert np.allclose(x, P.T @ xp, atol=1e-12)


def test_symmetric_gs_reduces_energy_error():
    A = sp.csr_matrix(laplacian_2d(6))
    rng = np.random.default_rng(5)
    x_exact = rng.normal(size=36)
    b = A @ x_exact
    x = np.zeros(36)
    energy = lambda v: float((v - x_exact) @ (A @ (v - x_exact)))
    e0 = energy(x)
    GaussSeidelSmoother(A).smooth(x, b, 1)
    assert energy(x) < e0
