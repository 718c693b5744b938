from typing import Tuple

import numpy as np
import scipy.sparse as sp
import structlog

from app.config import settings
from app.errors import ConfigurationError
from app.models.mesh import QuadMesh
from app.models.state import CellCoefficients
from app.schemas.parameters import FlowParams
from app.services.fem import REF_VALUES, CellValues, DofMap, assemble, cell_values, integrate
from app.services.linalg import solve_linear

logger = structlog.get_logger()


def chi_indicators(phi, c_x: float = 0.1):
    """
    Funciones indicadoras (chi_R, chi_F) con zona difusa lineal.

    chi_F = 1 para phi <= 0.5 - c_x, chi_R = 1 para phi >= 0.5 + c_x.
    """
    c1, c2 = 0.5 - c_x, 0.5 + c_x
    chi_f = np.clip(-(np.asarray(phi, dtype=float) - c2) / (c2 - c1), 0.0, 1.0)
    return 1.0 - chi_f, chi_f


def fracture_permeability(width):
    """Ley cúbica K_F = w^2 / 12 (anchos negativos se tratan como cerrados)."""
    w = np.maximum(np.asarray(width, dtype=float), 0.0)
    return w * w / 12.0


def effective_mobility(chi_r, chi_f, k_r, eta_r, k_f, eta_f):
    """K_eff = chi_R K_R / eta_R + chi_F K_F / eta_F."""
    return chi_r * k_r / eta_r + chi_f * k_f / eta_f


def fixed_stress_coefficient(flow: FlowParams, coeffs: CellCoefficients) -> np.ndarray:
    """3 alpha^2 / (3 lambda + 2 G) por celda (o con denominador fijado por configuración)."""
    if flow.fixed_stress_denominator is not None:
        denominator = np.full(coeffs.n_cells, flow.fixed_stress_denominator)
    else:
        denominator = 3.0 * coeffs.lame_lambda + 2.0 * coeffs.shear_modulus
    return 3.0 * flow.alpha ** 2 / denominator


def fracture_source(cv: CellValues, flow: FlowParams, epsilon: float, chi_f: np.ndarray) -> np.ndarray:
    """
    Inyección chi_F q_F en los puntos de Gauss (discos alrededor de cada centro).

    En modo "density" q_F es una densidad; en modo "rate" es un caudal y cada
    disco se normaliza con su área ponderada por chi_F, de modo que la integral
    del término fuente es exactamente q_F por centro.
    """
    q = np.zeros(cv.jxw.shape)
    if flow.q_f == 0.0 or not flow.source_centers:
        return q
    radius = flow.source_radius or 2.0 * epsilon
    for center in flow.source_centers:
        inside = chi_f * (np.hypot(cv.points[..., 0] - center[0], cv.points[..., 1] - center[1]) <= radius)
        if flow.source_mode == "density":
            q += flow.q_f * inside
            continue
        area = float(np.sum(cv.jxw * inside))
        if area > 0.0:
            q += flow.q_f / area * inside
        else:
            logger.warning("Injection disc does not intersect the fracture", center=center, radius=radius)
    return q


def assemble_fixed_stress_pressure(
    mesh: QuadMesh,
    dofmap: DofMap,
    flow: FlowParams,
    coeffs: CellCoefficients,
    p_n: np.ndarray,
    u_l: np.ndarray,
    u_n: np.ndarray,
    p_l: np.ndarray,
    phi_l: np.ndarray,
    w_l: np.ndarray,
    dt: float,
    epsilon: float
) -> Tuple[sp.csr_matrix, np.ndarray]:
    """
    Ensambla el problema de difracción de presión estabilizado (fixed-stress).

    Args:
        mesh: Malla
        dofmap: Dofs escalares de presión
        flow: Parámetros de flujo
        coeffs: Coeficientes por celda (lambda, G, K_R)
        p_n, u_n: Presión y desplazamiento del paso anterior
        p_l, u_l: Iterado fixed-stress actual
        phi_l, w_l: Campo de fase y ancho del iterado actual
        dt: Paso de tiempo
        epsilon: Longitud de regularización (radio por defecto de la inyección)

    Returns:
        (matriz, lado derecho)
    """
    if dt <= 0:
        raise ConfigurationError("time step must be positive")
    gravity = np.asarray(flow.gravity, dtype=float)
    s_cell = fixed_stress_coefficient(flow, coeffs)[:, None]
    k_r_cell = coeffs.permeability[:, None]

    def kernel(cv: CellValues):
        chi_r, chi_f = chi_indicators(cv.scalar(phi_l), flow.c_x)
        # Una fractura cerrada conduce al menos como la roca
        k_f = np.maximum(fracture_permeability(cv.scalar(w_l)), k_r_cell)

        mass_r = flow.rho_r * (1.0 / flow.biot_modulus + s_cell) / dt
        mass_f = flow.rho_f * flow.c_f / dt
        mass = chi_r * mass_r + chi_f * mass_f
        if mass.max() <= 0.0:
            raise ConfigurationError("pressure mass coefficient is non-positive everywhere")
        logger.debug("Pressure mass coefficient", min=float(mass.min()), max=float(mass.max()))

        diffusion = effective_mobility(
            chi_r, chi_f, k_r_cell * flow.rho_r, flow.eta_r, k_f * flow.rho_f, flow.eta_f
        )
        buoyancy = effective_mobility(
            chi_r, chi_f, k_r_cell * flow.rho_r ** 2, flow.eta_r, k_f * flow.rho_f ** 2, flow.eta_f
        )

        div_du = np.trace(cv.vector_grad(u_l - u_n), axis1=2, axis2=3)
        dp_lag = cv.scalar(p_l - p_n)
        forcing = (
            mass * cv.scalar(p_n)
            + chi_r * flow.rho_r * (s_cell * dp_lag - flow.alpha * div_du) / dt
            + chi_r * flow.q_r
            + fracture_source(cv, flow, epsilon, chi_f)
        )

        Ke = np.einsum("cq,qa,qb->cab", cv.jxw * mass, REF_VALUES, REF_VALUES)
        Ke += np.einsum("cq,cqad,cqbd->cab", cv.jxw * diffusion, cv.grads, cv.grads)
        Fe = np.einsum("cq,qa->ca", cv.jxw * forcing, REF_VALUES)
        if np.any(gravity):
            Fe += np.einsum("cq,cqad,d->ca", cv.jxw * buoyancy, cv.grads, gravity)
        return Ke, Fe

    return assemble(mesh, dofmap, kernel)


def solve_pressure(
    mesh: QuadMesh,
    flow: FlowParams,
    coeffs: CellCoefficients,
    p_n: np.ndarray,
    u_l: np.ndarray,
    u_n: np.ndarray,
    p_l: np.ndarray,
    phi_l: np.ndarray,
    w_l: np.ndarray,
    dt: float,
    epsilon: float
) -> Tuple[np.ndarray, int]:
    """Paso i) del acoplamiento: resuelve P^{l+1}. Devuelve (P, iteraciones del solver lineal)."""
    dofmap = DofMap(mesh, 1)
    A, b = assemble_fixed_stress_pressure(
        mesh, dofmap, flow, coeffs, p_n, u_l, u_n, p_l, phi_l, w_l, dt, epsilon
    )
    x, iterations = solve_linear(A, b, method=settings.pressure_linear_solver, block_size=1, name="pressure")
    return dofmap.distribute(x), iterations


def storage_integral(mesh: QuadMesh, pressure: np.ndarray, phi: np.ndarray, flow: FlowParams) -> float:
    """Masa de fluido almacenada: integral de (chi_R rho_R / M + chi_F rho_F c_F) P."""
    cv = cell_values(mesh)
    chi_r, chi_f = chi_indicators(cv.scalar(phi), flow.c_x)
    weight = chi_r * flow.rho_r / flow.biot_modulus + chi_f * flow.rho_f * flow.c_f
    return integrate(mesh, weight * cv.scalar(pressure))
