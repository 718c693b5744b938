import os

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from app.config import settings
from app.errors import SolverNotConverged
from app.services.linalg import (
    block_jacobi,
    cg_ssor,
    direct_solve,
    export_matrix_market,
    gmres,
    solve_linear,
    solve_spd,
    ssor_preconditioner,
)


def laplacian_1d(n):
    return sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")


def convection_diffusion(n):
    return sp.diags([-1.3 * np.ones(n - 1), 3.0 * np.ones(n), -0.7 * np.ones(n - 1)], [-1, 0, 1], format="csr")


@pytest.fixture
def rhs():
    return np.random.default_rng(7).normal(size=18)


def test_cg_matches_dense_lu(rhs):
    A = laplacian_1d(18)
    x, iterations = cg_ssor(A, rhs, tol=1e-12)
    np.testing.assert_allclose(x, scipy.linalg.solve(A.toarray(), rhs), rtol=1e-8, atol=1e-10)
    assert 0 < iterations <= 18


def test_gmres_matches_dense_lu(rhs):
    A = convection_diffusion(18)
    x, iterations = gmres(A, rhs, precond=block_jacobi(A, 3), tol=1e-12)
    np.testing.assert_allclose(x, scipy.linalg.solve(A.toarray(), rhs), rtol=1e-8, atol=1e-10)
    assert iterations > 0


def test_zero_rhs_short_circuits():
    A = laplacian_1d(6)
    for solver in (cg_ssor, gmres):
        x, iterations = solver(A, np.zeros(6))
        assert iterations == 0
        assert not x.any()


def test_cg_reports_best_iterate():
    A = laplacian_1d(18)
    with pytest.raises(SolverNotConverged) as info:
        cg_ssor(A, np.ones(18), tol=1e-14, max_iter=1)
    assert info.value.iterations == 1
    assert info.value.best_iterate is not None


def test_ssor_on_diagonal_matrix():
    M = ssor_preconditioner(sp.diags([2.0, 4.0]).tocsr(), omega=1.0)
    np.testing.assert_allclose(M @ np.ones(2), [0.5, 0.25])
    with pytest.raises(ValueError):
        ssor_preconditioner(sp.diags([2.0, 4.0]).tocsr(), omega=2.5)


def test_block_jacobi_inverts_diagonal_blocks():
    rng = np.random.default_rng(1)
    dense = rng.normal(size=(6, 6)) + 6.0 * np.eye(6)
    P = block_jacobi(sp.csr_matrix(dense), 3)
    v = rng.normal(size=6)
    expected = np.concatenate([
        np.linalg.solve(dense[:3, :3], v[:3]),
        np.linalg.solve(dense[3:, 3:], v[3:]),
    ])
    np.testing.assert_allclose(P @ v, expected, rtol=1e-12)
    with pytest.raises(ValueError):
        block_jacobi(sp.csr_matrix(dense), 4)


def test_direct_solve_sparse_branch(monkeypatch, rhs):
    A = convection_diffusion(18)
    dense = direct_solve(A, rhs)
    monkeypatch.setattr(settings, "dense_lu_max_dofs", 5)
    np.testing.assert_allclose(direct_solve(A, rhs), dense, rtol=1e-12)


def test_solve_linear_falls_back_to_direct(monkeypatch, rhs):
    A = convection_diffusion(18)
    monkeypatch.setattr(settings, "gmres_restart", 1)
    monkeypatch.setattr(settings, "linear_max_iter", 1)
    x, iterations = solve_linear(A, rhs, method="gmres", tol=1e-14)
    np.testing.assert_allclose(x, scipy.linalg.solve(A.toarray(), rhs), rtol=1e-10)
    assert iterations >= 1

    monkeypatch.setattr(settings, "direct_fallback", False)
    with pytest.raises(SolverNotConverged):
        solve_linear(A, rhs, method="gmres", tol=1e-14)


def test_solve_spd_and_direct_method(rhs):
    A = laplacian_1d(18)
    x_cg, _ = solve_spd(A, rhs)
    x_direct, iterations = solve_linear(A, rhs, method="direct")
    assert iterations == 0
    np.testing.assert_allclose(x_cg, x_direct, rtol=1e-8, atol=1e-10)


def test_matrix_export_only_in_debug(monkeypatch, tmp_path):
    A = laplacian_1d(4)
    assert export_matrix_market(A, np.ones(4), "laplacian") is None
    monkeypatch.setattr(settings, "debug", True)
    monkeypatch.setattr(settings, "matrix_export_dir", str(tmp_path))
    path = export_matrix_market(A, np.ones(4), "laplacian")
    assert os.path.exists(f"{path}_matrix.mtx")
    assert os.path.exists(f"{path}_rhs.mtx")


def laplacian_2d(n, shift=0.1):
    return (sp.kronsum(laplacian_1d(n), laplacian_1d(n)) + shift * sp.identity(n * n)).tocsr()


def test_cg_energy_error_decreases():
    A = laplacian_2d(12)
    b = np.random.default_rng(3).normal(size=A.shape[0])
    exact = scipy.linalg.solve(A.toarray(), b)
    errors = []

    def energy_error(xk):
        e = xk - exact
        errors.append(float(np.sqrt(e @ (A @ e))))

    cg_ssor(A, b, tol=1e-12, callback=energy_error)
    assert len(errors) > 2
    assert np.all(np.diff(errors) <= 1e-10 * errors[0])


def test_amg_gmres_matches_direct():
    A = laplacian_2d(30)
    b = np.random.default_rng(4).normal(size=A.shape[0])
    x, iterations = solve_linear(A, b, method="amg", tol=1e-10)
    np.testing.assert_allclose(x, direct_solve(A, b), rtol=1e-7, atol=1e-9)
    assert 0 < iterations < 40


def test_unknown_linear_solver(rhs):
    with pytest.raises(ValueError):
        solve_linear(laplacian_1d(18), rhs, method="jacobi")
