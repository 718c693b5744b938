import math
import os
from typing import Callable, Optional, Tuple

import numpy as np
import pyamg
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import structlog

from app.config import settings
from app.errors import SolverNotConverged

logger = structlog.get_logger()


def ssor_preconditioner(A: sp.csr_matrix, omega: float = 1.2) -> spla.LinearOperator:
    """
    Precondicionador SSOR simétrico.

    M = omega/(2-omega) (D/omega + L) D^-1 (D/omega + U); las dos
    sustituciones triangulares se resuelven con SuperLU en orden natural.
    """
    if not 0.0 < omega < 2.0:
        raise ValueError("SSOR relaxation must lie in (0, 2)")
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise ValueError("SSOR requires a positive diagonal")
    d_omega = sp.diags(diag / omega)
    lower = spla.splu((sp.tril(A, k=-1) + d_omega).tocsc(), permc_spec="NATURAL")
    upper = spla.splu((sp.triu(A, k=1) + d_omega).tocsc(), permc_spec="NATURAL")
    factor = (2.0 - omega) / omega

    def apply(r: np.ndarray) -> np.ndarray:
        y = lower.solve(np.asarray(r, dtype=float).ravel())
        return upper.solve(factor * diag * y)

    return spla.LinearOperator(A.shape, matvec=apply, dtype=float)


def block_jacobi(A: sp.csr_matrix, block_size: int = 1) -> spla.LinearOperator:
    """Inversa de los bloques diagonales nodales (1x1 escalar, 3x3 para (u_x, u_y, phi))."""
    n = A.shape[0]
    if n % block_size:
        raise ValueError("matrix size is not a multiple of the block size")
    if block_size == 1:
        diag = A.diagonal()
        safe = np.where(diag == 0, 1.0, diag)
        inv = 1.0 / safe
        return spla.LinearOperator(A.shape, matvec=lambda x: inv * np.ravel(x), dtype=float)

    nb = n // block_size
    blocks = np.zeros((nb, block_size, block_size))
    for r in range(block_size):
        for c in range(block_size):
            k = c - r
            # A.diagonal(k)[j] = A[j, j+k] (k >= 0) o A[j-k, j] (k < 0)
            j = np.arange(nb) * block_size + min(r, c)
            blocks[:, r, c] = A.diagonal(k)[j]
    try:
        inv_blocks = np.linalg.inv(blocks)
    except np.linalg.LinAlgError:
        inv_blocks = np.linalg.pinv(blocks)
    P = sp.block_diag(list(inv_blocks), format="csr")
    return spla.LinearOperator(A.shape, matvec=lambda x: P @ np.ravel(x), dtype=float)


def amg_preconditioner(A: sp.csr_matrix) -> spla.LinearOperator:
    """V-ciclo de multimalla algebraica por agregación suavizada (pyamg)."""
    hierarchy = pyamg.smoothed_aggregation_solver(sp.csr_matrix(A), max_coarse=50)
    logger.debug("AMG hierarchy", levels=len(hierarchy.levels), operator_complexity=hierarchy.operator_complexity())
    return hierarchy.aspreconditioner(cycle="V")


def cg_ssor(
    A: sp.csr_matrix,
    b: np.ndarray,
    tol: float = 1e-10,
    omega: Optional[float] = None,
    max_iter: Optional[int] = None,
    x0: Optional[np.ndarray] = None,
    callback: Optional[Callable[[np.ndarray], None]] = None
) -> Tuple[np.ndarray, int]:
    """
    Gradiente conjugado precondicionado con SSOR.

    Args:
        A: Matriz simétrica definida positiva
        b: Lado derecho
        tol: Residuo relativo ||b - Ax|| <= tol ||b||
        omega: Relajación SSOR (por defecto settings.ssor_omega)
        max_iter: Máximo de iteraciones (por defecto settings.linear_max_iter)
        callback: Se invoca con cada iterado

    Returns:
        (x, iteraciones)
    """
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return np.zeros_like(b), 0
    omega = settings.ssor_omega if omega is None else omega
    max_iter = settings.linear_max_iter if max_iter is None else max_iter
    M = ssor_preconditioner(A, omega)

    history = {"iterations": 0, "x": x0}

    def record(xk):
        history["iterations"] += 1
        history["x"] = xk
        if callback is not None:
            callback(xk)

    x, info = spla.cg(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=max_iter, M=M, callback=record)
    if info != 0:
        logger.warning("CG did not converge", iterations=history["iterations"], info=info)
        raise SolverNotConverged(
            f"CG-SSOR did not converge in {max_iter} iterations",
            best_iterate=x,
            iterations=history["iterations"]
        )
    return x, history["iterations"]


def gmres(
    A: sp.csr_matrix,
    b: np.ndarray,
    precond: Optional[spla.LinearOperator] = None,
    tol: float = 1e-10,
    restart: Optional[int] = None,
    max_iter: Optional[int] = None,
    x0: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, int]:
    """GMRES reiniciado; ``max_iter`` cuenta iteraciones internas totales."""
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return np.zeros_like(b), 0
    restart = settings.gmres_restart if restart is None else restart
    max_iter = settings.linear_max_iter if max_iter is None else max_iter
    restart = max(1, min(restart, A.shape[0]))

    counter = {"iterations": 0}

    def callback(_residual):
        counter["iterations"] += 1

    x, info = spla.gmres(
        A,
        b,
        x0=x0,
        rtol=tol,
        atol=0.0,
        restart=restart,
        maxiter=max(1, math.ceil(max_iter / restart)),
        M=precond,
        callback=callback,
        callback_type="pr_norm"
    )
    if info != 0:
        logger.warning("GMRES did not converge", iterations=counter["iterations"], info=info)
        raise SolverNotConverged(
            f"GMRES did not converge in {max_iter} iterations",
            best_iterate=x,
            iterations=counter["iterations"]
        )
    return x, counter["iterations"]


def direct_solve(A: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    """LU densa hasta settings.dense_lu_max_dofs, SuperLU por encima."""
    b = np.asarray(b, dtype=float)
    if A.shape[0] <= settings.dense_lu_max_dofs:
        lu, piv = scipy.linalg.lu_factor(A.toarray())
        return scipy.linalg.lu_solve((lu, piv), b)
    return spla.splu(sp.csc_matrix(A)).solve(b)


def export_matrix_market(A: sp.csr_matrix, b: np.ndarray, name: str) -> Optional[str]:
    """Exporta el sistema en MatrixMarket cuando settings.debug está activo."""
    if not settings.debug:
        return None
    os.makedirs(settings.matrix_export_dir, exist_ok=True)
    path = os.path.join(settings.matrix_export_dir, name)
    scipy.io.mmwrite(f"{path}_matrix.mtx", A)
    scipy.io.mmwrite(f"{path}_rhs.mtx", np.asarray(b).reshape(-1, 1))
    logger.debug("System exported", path=path, dofs=A.shape[0])
    return path


def solve_linear(
    A: sp.csr_matrix,
    b: np.ndarray,
    method: str = "gmres",
    block_size: int = 1,
    tol: Optional[float] = None,
    name: str = "system"
) -> Tuple[np.ndarray, int]:
    """
    Resuelve un sistema con GMRES o de forma directa.

    Args:
        method: "gmres" (Jacobi por bloques), "amg" (V-ciclo AMG) o "direct"
        block_size: Tamaño de bloque nodal del precondicionador de Jacobi

    Si GMRES no converge y settings.direct_fallback está activo se recurre a
    la solución directa; las iteraciones gastadas se siguen contando.
    """
    tol = settings.linear_rtol if tol is None else tol
    export_matrix_market(A, b, name)
    if method == "direct":
        return direct_solve(A, b), 0
    if method == "amg":
        precond = amg_preconditioner(A)
    elif method == "gmres":
        precond = block_jacobi(A, block_size)
    else:
        raise ValueError(f"unknown linear solver {method!r}")
    try:
        x, iterations = gmres(A, b, precond=precond, tol=tol)
    except SolverNotConverged as e:
        if not settings.direct_fallback:
            raise
        logger.warning("Falling back to direct solver", system=name, method=method, gmres_iterations=e.iterations)
        return direct_solve(A, b), e.iterations
    logger.debug("Linear solve", system=name, method=method, gmres_iterations=iterations)
    return x, iterations


def solve_spd(A: sp.csr_matrix, b: np.ndarray, tol: Optional[float] = None, name: str = "system") -> Tuple[np.ndarray, int]:
    """CG-SSOR con la misma política de respaldo directo que solve_linear."""
    tol = settings.linear_rtol if tol is None else tol
    export_matrix_market(A, b, name)
    try:
        return cg_ssor(A, b, tol=tol)
    except SolverNotConverged as e:
        if not settings.direct_fallback:
            raise
        logger.warning("Falling back to direct solver", system=name, cg_iterations=e.iterations)
        return direct_solve(A, b), e.iterations
