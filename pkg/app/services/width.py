from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
import structlog

from app.errors import InterfaceError
from app.models.mesh import InterfaceSet, QuadMesh
from app.schemas.parameters import WidthParams
from app.services.fem import (
    DofMap,
    FaceValues,
    apply_dirichlet,
    assemble,
    evaluate_at_points,
    face_values,
    laplace_kernel,
)
from app.services.linalg import solve_spd
from app.services.mesh import update_material_ids

logger = structlog.get_logger()


def interface_faces(mesh: QuadMesh) -> InterfaceSet:
    """Caras que separan una celda de material 0 de una de material 1."""
    faces = mesh.faces
    interior = faces.interior
    cell = faces.cell[interior]
    neighbor = faces.neighbor[interior]
    ids = mesh.material_id
    on_interface = ids[cell] != ids[neighbor]
    cell, neighbor = cell[on_interface], neighbor[on_interface]
    local = faces.local_face[interior][on_interface]
    fracture_first = ids[cell] == 0
    return InterfaceSet(
        cell=cell,
        local_face=local,
        fracture_cell=np.where(fracture_first, cell, neighbor),
        reservoir_cell=np.where(fracture_first, neighbor, cell),
    )


def fracture_components(mesh: QuadMesh) -> Tuple[np.ndarray, int]:
    """Componentes conexas de celdas de fractura; etiqueta -1 fuera de la fractura."""
    fracture = mesh.material_id == 0
    labels = np.full(mesh.n_cells, -1, dtype=np.int64)
    if not fracture.any():
        return labels, 0
    faces = mesh.faces
    interior = faces.interior
    a, b = faces.cell[interior], faces.neighbor[interior]
    both = fracture[a] & fracture[b]
    graph = sp.coo_matrix(
        (np.ones(int(both.sum())), (a[both], b[both])), shape=(mesh.n_cells, mesh.n_cells)
    )
    _, all_labels = connected_components(graph, directed=False)
    # Renumeración compacta solo sobre celdas de fractura
    _, compact = np.unique(all_labels[fracture], return_inverse=True)
    labels[fracture] = np.asarray(compact).ravel()
    return labels, int(labels.max()) + 1


def levelset_shift(phi: np.ndarray, c_ls: float) -> np.ndarray:
    return np.asarray(phi, dtype=float) - c_ls


def _penalty_kernel(theta: float, data: Optional[np.ndarray] = None):
    def kernel(fv: FaceValues):
        Ke = theta * np.einsum("fq,fqa,fqb->fab", fv.jxw, fv.values, fv.values)
        Fe = None
        if data is not None:
            Fe = theta * np.einsum("fq,fq,fqa->fa", fv.jxw, data, fv.values)
        return Ke, Fe
    return kernel


def levelset_poisson(mesh: QuadMesh, phi: np.ndarray, params: WidthParams) -> np.ndarray:
    """
    Level-set por problema de Poisson penalizado sobre la frontera de fractura.

    La fuente vale f1 en celdas de fractura y f2 en el reservorio, de modo que
    Phi_LS < 0 dentro de la fractura y > 0 lejos de ella.
    """
    mesh = update_material_ids(mesh, phi, params.c_ls)
    interface = interface_faces(mesh)
    if len(interface) == 0:
        raise InterfaceError("no fracture boundary")

    source = np.where(mesh.material_id == 0, params.f1, params.f2).astype(float)[:, None]
    dofmap = DofMap(mesh, 1)
    A, b = assemble(
        mesh,
        dofmap,
        laplace_kernel(1.0, source),
        face_kernel=_penalty_kernel(params.theta),
        faces=interface.faces,
    )
    x, iterations = solve_spd(A, b, name="levelset")
    logger.debug("Level-set solved", iterations=iterations, interface_faces=len(interface))
    return dofmap.distribute(x)


def boundary_width(displacement: np.ndarray, levelset_gradient: np.ndarray) -> np.ndarray:
    """
    Ancho en puntos de la interfaz: |2 u . grad(Phi_LS)| / |grad(Phi_LS)|.

    Gradientes degenerados (norma <= 1e-12) dan ancho nulo.
    """
    u = np.atleast_2d(displacement)
    grad = np.atleast_2d(levelset_gradient)
    norm = np.linalg.norm(grad, axis=-1)
    safe = np.where(norm > 1e-12, norm, 1.0)
    width = np.abs(2.0 * np.einsum("pd,pd->p", u, grad)) / safe
    return np.where(norm > 1e-12, width, 0.0)


def interface_widths(
    mesh: QuadMesh,
    interface: InterfaceSet,
    displacement: np.ndarray,
    levelset: np.ndarray
) -> np.ndarray:
    """w_D en los dos puntos de Gauss de cada cara de interfaz, shape (nf, 2)."""
    if len(interface) == 0:
        return np.zeros((0, 2))
    fv = face_values(mesh, interface.cell, interface.local_face)
    points = fv.points.reshape(-1, 2)
    reservoir = np.repeat(interface.reservoir_cell, 2)
    u, _ = evaluate_at_points(mesh, displacement, points, cells=reservoir)
    _, grad = evaluate_at_points(mesh, levelset, points, cells=reservoir)
    return boundary_width(u, grad).reshape(-1, 2)


def solve_width(
    mesh: QuadMesh,
    interface: InterfaceSet,
    w_d: np.ndarray,
    params: WidthParams
) -> np.ndarray:
    """
    Interpola el ancho en todo el dominio.

    Resuelve (grad W, grad psi) + theta <W, psi>_Gamma = theta <w_D, psi>_Gamma + (g, psi)
    con g = beta * max(w_D) de cada componente de fractura y W = 0 en el borde.
    """
    if len(interface) == 0:
        raise InterfaceError("no fracture boundary")
    labels, n_components = fracture_components(mesh)
    face_label = labels[interface.fracture_cell]
    peak = np.zeros(max(n_components, 1))
    np.maximum.at(peak, face_label, w_d.max(axis=1))
    source = np.where(labels >= 0, params.beta * peak[np.maximum(labels, 0)], 0.0)[:, None]

    dofmap = DofMap(mesh, 1)
    A, b = assemble(
        mesh,
        dofmap,
        laplace_kernel(1.0, source),
        face_kernel=_penalty_kernel(params.theta, w_d),
        faces=interface.faces,
    )
    A, b = apply_dirichlet(A, b, dofmap.boundary_dofs(), 0.0)
    x, iterations = solve_spd(A, b, name="width")
    logger.debug(
        "Width solved",
        iterations=iterations,
        components=n_components,
        max_boundary_width=float(w_d.max()) if w_d.size else 0.0
    )
    return dofmap.distribute(x)
