from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
import structlog

from app.config import settings
from app.errors import NewtonNotConverged
from app.models.mesh import QuadMesh
from app.models.state import CellCoefficients, MechState
from app.schemas.parameters import ElasticParams
from app.services.fem import REF_VALUES, CellValues, DofMap, apply_dirichlet, assemble, cell_values
from app.services.linalg import solve_linear

logger = structlog.get_logger()

IDENTITY = np.eye(2)


def split_stress(strain: np.ndarray, lame_lambda, shear_modulus) -> Tuple[np.ndarray, np.ndarray]:
    """
    Descomposición de Amor de la tensión en parte de tracción y de compresión.

    Args:
        strain: Tensor(es) de deformación simétrico(s) (..., 2, 2)
        lame_lambda, shear_modulus: Escalares o arrays compatibles con (...)

    Returns:
        (sigma_plus, sigma_minus), con sigma_plus + sigma_minus = lambda tr(e) I + 2 G e
    """
    strain = np.asarray(strain, dtype=float)
    lam = np.asarray(lame_lambda, dtype=float)[..., None, None]
    shear = np.asarray(shear_modulus, dtype=float)[..., None, None]
    trace = (strain[..., 0, 0] + strain[..., 1, 1])[..., None, None]
    trace_plus = np.maximum(trace, 0.0)
    trace_minus = trace - trace_plus
    sigma_plus = (shear + lam) * trace_plus * IDENTITY + 2.0 * shear * (strain - 0.5 * trace * IDENTITY)
    sigma_minus = (shear + lam) * trace_minus * IDENTITY
    return sigma_plus, sigma_minus


def degradation(phi, kappa: float):
    """(1 - kappa) phi^2 + kappa."""
    phi = np.asarray(phi, dtype=float)
    return (1.0 - kappa) * phi * phi + kappa


def extrapolate_phi(phi_n: np.ndarray, phi_nm1: Optional[np.ndarray], mode: str = "linear") -> np.ndarray:
    """E(phi): extrapolación lineal en dos puntos, recortada a [0, 1]; Phi^n si no hay historia."""
    if phi_nm1 is None or mode == "lagged":
        return np.array(phi_n, dtype=float, copy=True)
    return np.clip(2.0 * np.asarray(phi_n) - np.asarray(phi_nm1), 0.0, 1.0)


def _test_functions(cv: CellValues):
    # Funciones test de los 12 dofs locales (u_x, u_y, phi por nodo)
    nc, nq = cv.jxw.shape
    strain = np.zeros((nc, nq, 12, 2, 2))
    vector = np.zeros((nq, 12, 2))
    psi = np.zeros((nq, 12))
    grad_psi = np.zeros((nc, nq, 12, 2))
    for a in range(4):
        grad = cv.grads[:, :, a, :]
        for comp in (0, 1):
            k = 3 * a + comp
            strain[:, :, k, comp, :] += 0.5 * grad
            strain[:, :, k, :, comp] += 0.5 * grad
            vector[:, k, comp] = REF_VALUES[:, a]
        psi[:, 3 * a + 2] = REF_VALUES[:, a]
        grad_psi[:, :, 3 * a + 2, :] = grad
    divergence = strain[..., 0, 0] + strain[..., 1, 1]
    return strain, divergence, vector, psi, grad_psi


def assemble_mech_residual_jacobian(
    mesh: QuadMesh,
    dofmap: DofMap,
    state: MechState,
    pressure: np.ndarray,
    params: ElasticParams,
    coeffs: CellCoefficients,
    e_phi: np.ndarray,
    with_jacobian: bool = True
) -> Tuple[Optional[sp.csr_matrix], np.ndarray]:
    """
    Residuo de Galerkin del sistema cuasi-monolítico desplazamiento/campo de fase
    y su Jacobiano exacto con E(phi) fijo.
    """
    kappa, alpha = params.kappa, params.alpha
    g_c, eps = params.g_c, params.epsilon
    lam = coeffs.lame_lambda[:, None]
    shear = coeffs.shear_modulus[:, None]

    def kernel(cv: CellValues):
        eps_t, div_t, vec_t, psi, gpsi = _test_functions(cv)
        u = cv.vector(state.displacement)
        grad_u = cv.vector_grad(state.displacement)
        strain = 0.5 * (grad_u + np.swapaxes(grad_u, -1, -2))
        div_u = strain[..., 0, 0] + strain[..., 1, 1]
        phi = cv.scalar(state.phasefield)
        grad_phi = cv.scalar_grad(state.phasefield)
        p = cv.scalar(pressure)
        grad_p = cv.scalar_grad(pressure)
        e_q = cv.scalar(e_phi)
        g = degradation(e_q, kappa)
        e2 = e_q * e_q

        sigma_plus, sigma_minus = split_stress(strain, lam, shear)
        sp_t = np.einsum("cqij,cqkij->cqk", sigma_plus, eps_t)
        sm_t = np.einsum("cqij,cqkij->cqk", sigma_minus, eps_t)
        energy_plus = np.einsum("cqij,cqij->cq", sigma_plus, strain)
        gp_u = np.einsum("cqd,cqd->cq", grad_p, u)

        # Filas de desplazamiento
        integrand = (
            g[..., None] * sp_t + sm_t
            - ((alpha - 1.0) * e2 * p)[..., None] * div_t
            + e2[..., None] * np.einsum("cqd,qkd->cqk", grad_p, vec_t)
        )
        Fe = np.einsum("cq,cqk->ck", cv.jxw, integrand)
        # Filas de campo de fase
        phase = (
            (1.0 - kappa) * phi * energy_plus
            - 2.0 * (alpha - 1.0) * phi * p * div_u
            + 2.0 * phi * gp_u
            - g_c / eps * (1.0 - phi)
        )
        Fe += np.einsum("cq,qk->ck", cv.jxw * phase, psi)
        Fe += g_c * eps * np.einsum("cq,cqd,cqkd->ck", cv.jxw, grad_phi, gpsi)

        if not with_jacobian:
            return None, Fe

        tension = (div_u > 0.0).astype(float)
        coef_tt = g * ((shear + lam) * tension - shear) + (shear + lam) * (1.0 - tension)
        Ke = np.einsum("cq,cqk,cqm->ckm", cv.jxw * coef_tt, div_t, div_t)
        Ke += np.einsum("cq,cqkij,cqmij->ckm", cv.jxw * 2.0 * shear * g, eps_t, eps_t)

        coupling = (
            2.0 * (1.0 - kappa) * phi[..., None] * sp_t
            - (2.0 * (alpha - 1.0) * phi * p)[..., None] * div_t
            + 2.0 * phi[..., None] * np.einsum("cqd,qmd->cqm", grad_p, vec_t)
        )
        Ke += np.einsum("cq,qk,cqm->ckm", cv.jxw, psi, coupling)

        phase_diag = (
            (1.0 - kappa) * energy_plus
            - 2.0 * (alpha - 1.0) * p * div_u
            + 2.0 * gp_u
            + g_c / eps
        )
        Ke += np.einsum("cq,qk,qm->ckm", cv.jxw * phase_diag, psi, psi)
        Ke += g_c * eps * np.einsum("cq,cqkd,cqmd->ckm", cv.jxw, gpsi, gpsi)
        return Ke, Fe

    return assemble(mesh, dofmap, kernel)


@dataclass
class NewtonResult:
    state: MechState
    iterations: int
    gmres_iterations: int
    active_nodes: int
    residual: float


def _free_norm(residual: np.ndarray, fixed: np.ndarray) -> float:
    r = residual.copy()
    r[fixed] = 0.0
    return float(np.linalg.norm(r))


def active_set_newton_solve(
    mesh: QuadMesh,
    initial: MechState,
    pressure: np.ndarray,
    params: ElasticParams,
    coeffs: CellCoefficients,
    e_phi: np.ndarray,
    bound: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
    max_newton: Optional[int] = None
) -> NewtonResult:
    """
    Newton semisuave / conjunto activo primal-dual para la desigualdad variacional
    0 <= phi <= bound.

    Con multiplicador -R_phi, un nodo es activo en la cota superior si
    -R_i + c (phi_i - bound_i) > tol y en la inferior si R_i - c phi_i > tol,
    con c = factor * G_c / epsilon y tol = settings.newton_atol. Los nodos con
    bound <= 0 quedan fijados a cero.

    Args:
        mesh: Malla
        initial: Estado de partida (también aporta phasefield_prev como cota por defecto)
        pressure: Presión nodal P^{l+1}
        params: Parámetros elásticos y de fractura
        coeffs: Coeficientes por celda
        e_phi: Campo de fase extrapolado E(phi) usado en la degradación
        bound: Cota superior de irreversibilidad (Phi^n)
        tol: Tolerancia relativa del residuo (por defecto settings.newton_rtol)
        max_newton: Máximo de iteraciones (por defecto settings.max_newton)

    Returns:
        NewtonResult con el estado convergido y los contadores

    Raises:
        NewtonNotConverged: límite de iteraciones, o búsqueda lineal sin descenso
            con el conjunto activo estable
    """
    tol = settings.newton_rtol if tol is None else tol
    max_newton = settings.max_newton if max_newton is None else max_newton
    bound = initial.phasefield_prev if bound is None else np.asarray(bound, dtype=float)

    dofmap = DofMap(mesh, 3)
    n_nodes = mesh.n_vertices
    phase = 3 * np.arange(n_nodes) + 2
    u_fixed = dofmap.boundary_dofs(components=(0, 1))
    hanging = np.zeros(n_nodes, dtype=bool)
    hanging[mesh.constraints.nodes] = True
    pinned = (bound <= 0.0) & ~hanging
    c = settings.complementarity_factor * params.g_c / params.epsilon
    switch_tol = settings.newton_atol

    def residual_and_jacobian(x, with_jacobian=True):
        return assemble_mech_residual_jacobian(
            mesh, dofmap, initial.with_packed(x), pressure, params, coeffs, e_phi, with_jacobian
        )

    def project(x):
        block = x.reshape(-1, 3).copy()
        block[:, 2] = np.clip(block[:, 2], 0.0, np.maximum(bound, 0.0))
        return dofmap.distribute(block.ravel())

    def failure(message, x, iteration, res_norm, active, gmres_total, **extra):
        logger.error("Newton did not converge", reason=message, iterations=iteration, residual=res_norm)
        return NewtonNotConverged(
            f"active-set Newton {message}",
            state=initial.with_packed(x),
            iterations=iteration,
            diagnostics={
                "residual": res_norm,
                "active_nodes": int(active.sum()),
                "gmres_iterations": gmres_total,
                **extra,
            }
        )

    x = project(initial.packed())
    active_prev = None
    reference = None
    small_step = False
    gmres_total = 0
    res_norm = np.inf
    active = np.zeros(n_nodes, dtype=bool)

    for iteration in range(1, max_newton + 1):
        J, R = residual_and_jacobian(x)
        phi = x[phase]
        upper = (-R[phase] + c * (phi - bound) > switch_tol) & ~hanging
        lower = (R[phase] - c * phi > switch_tol) & ~hanging & ~upper
        active = upper | lower | pinned
        fixed = np.concatenate([u_fixed, phase[active]])
        res_norm = _free_norm(R, fixed)
        reference = res_norm if reference is None else reference
        threshold = max(tol * reference, settings.newton_atol)

        logger.debug(
            "newton_iteration",
            iteration=iteration,
            residual=res_norm,
            upper_active=int(upper.sum()),
            lower_active=int(lower.sum())
        )

        if active_prev is None and res_norm <= settings.newton_atol:
            break
        set_changed = not np.array_equal(active, pinned if active_prev is None else active_prev)
        if not set_changed and (res_norm <= threshold or small_step):
            break

        targets = np.where(upper, bound, 0.0)[active]
        values = np.concatenate([np.zeros(u_fixed.size), targets - phi[active]])
        A, rhs = apply_dirichlet(J, -R, fixed, values)
        delta, its = solve_linear(
            A, rhs, method=settings.mechanics_linear_solver, block_size=3, name="mechanics"
        )
        gmres_total += its
        delta = dofmap.distribute(delta)

        # Búsqueda lineal por bisección sobre la norma libre
        step = 1.0
        accepted = None
        best_norm = np.inf
        for trials in range(1, settings.line_search_trials + 1):
            x_trial = project(x + step * delta)
            _, R_trial = residual_and_jacobian(x_trial, with_jacobian=False)
            trial_norm = _free_norm(R_trial, fixed)
            if trial_norm < res_norm:
                accepted = x_trial
                break
            best_norm = min(best_norm, trial_norm)
            step *= 0.5

        if accepted is None:
            if not set_changed:
                logger.debug("line_search", iteration=iteration, step=0.0, trials=trials, residual=best_norm)
                raise failure(
                    f"line search found no decrease at iteration {iteration}",
                    x, iteration, res_norm, active, gmres_total,
                    line_search_trials=trials, best_trial_residual=best_norm
                )
            # Cambio de conjunto activo: paso completo
            step = 1.0
            accepted = project(x + delta)
        logger.debug("line_search", iteration=iteration, step=step, trials=trials, gmres_iterations=its)

        change = (accepted - x).reshape(-1, 3)
        u_scale = max(float(np.abs(accepted.reshape(-1, 3)[:, :2]).max()), 1e-300)
        small_step = (
            float(np.abs(change[:, :2]).max()) <= settings.newton_step_tol * u_scale
            and float(np.abs(change[:, 2]).max()) <= settings.newton_step_tol
        )
        x = accepted
        active_prev = active
    else:
        raise failure(
            f"did not converge in {max_newton} iterations", x, max_newton, res_norm, active, gmres_total
        )

    return NewtonResult(
        state=initial.with_packed(x),
        iterations=iteration,
        gmres_iterations=gmres_total,
        active_nodes=int(active.sum()),
        residual=res_norm,
    )


def total_crack_volume(mesh: QuadMesh, displacement: np.ndarray, phasefield: np.ndarray) -> float:
    """Volumen total de fractura: integral de u . grad(phi)."""
    cv = cell_values(mesh)
    return float(np.sum(cv.jxw * np.einsum("cqd,cqd->cq", cv.vector(displacement), cv.scalar_grad(phasefield))))
