from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
import structlog

from app.errors import AssemblyError
from app.models.mesh import FACE_VERTICES, QuadMesh

logger = structlog.get_logger()

# Gauss de 2 puntos en [0, 1]
GAUSS_1D = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
GAUSS_1D_WEIGHTS = np.array([0.5, 0.5])
QUAD_POINTS = np.array([[x, y] for y in GAUSS_1D for x in GAUSS_1D])
QUAD_WEIGHTS = np.full(4, 0.25)


def q1_shape(ref_point) -> Tuple[np.ndarray, np.ndarray]:
    """
    Funciones bilineales en el elemento de referencia [0,1]^2.

    Args:
        ref_point: (xi, eta) o array (..., 2)

    Returns:
        valores (..., 4) y gradientes de referencia (..., 4, 2)
    """
    p = np.asarray(ref_point, dtype=float)
    xi, eta = p[..., 0], p[..., 1]
    values = np.stack(
        [(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta], axis=-1
    )
    grads = np.stack(
        [
            np.stack([-(1 - eta), -(1 - xi)], axis=-1),
            np.stack([(1 - eta), -xi], axis=-1),
            np.stack([eta, xi], axis=-1),
            np.stack([-eta, (1 - xi)], axis=-1),
        ],
        axis=-2,
    )
    return values, grads


REF_VALUES, REF_GRADS = q1_shape(QUAD_POINTS)


@dataclass(frozen=True, eq=False)
class DofMap:
    """Numeración de grados de libertad nodal, intercalada (nodo, componente)."""

    mesh: QuadMesh
    n_components: int = 1

    @property
    def kind(self) -> str:
        return {1: "scalar", 2: "vector", 3: "vector+scalar"}[self.n_components]

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_vertices * self.n_components

    @property
    def dofs_per_cell(self) -> int:
        return 4 * self.n_components

    @cached_property
    def cell_dofs(self) -> np.ndarray:
        nc = self.n_components
        dofs = self.mesh.cells[:, :, None] * nc + np.arange(nc)
        return dofs.reshape(self.mesh.n_cells, 4 * nc)

    def node_dofs(self, nodes: np.ndarray, component: int = 0) -> np.ndarray:
        return np.asarray(nodes, dtype=np.int64) * self.n_components + component

    def boundary_dofs(self, components=None) -> np.ndarray:
        nodes = np.flatnonzero(self.mesh.boundary_vertices)
        comps = range(self.n_components) if components is None else components
        return np.sort(np.concatenate([self.node_dofs(nodes, c) for c in comps]))

    @cached_property
    def constraint_matrix(self) -> sp.csr_matrix:
        return self.mesh.constraints.matrix(self.mesh.n_vertices, self.n_components)

    @cached_property
    def constrained_dofs(self) -> np.ndarray:
        nodes = self.mesh.constraints.nodes
        if nodes.size == 0:
            return nodes
        return np.sort(np.concatenate([self.node_dofs(nodes, c) for c in range(self.n_components)]))

    def distribute(self, x: np.ndarray) -> np.ndarray:
        """Reconstruye los dofs colgantes a partir de sus maestros."""
        if self.constrained_dofs.size == 0:
            return np.array(x, dtype=float, copy=True)
        return self.constraint_matrix @ x


@dataclass(frozen=True, eq=False)
class CellValues:
    """Valores y gradientes de forma en los puntos de Gauss de todas las celdas."""

    mesh: QuadMesh
    grads: np.ndarray   # (nc, nq, 4, 2)
    jxw: np.ndarray     # (nc, nq)
    points: np.ndarray  # (nc, nq, 2)

    @property
    def shape(self) -> np.ndarray:
        return REF_VALUES

    def scalar(self, nodal: np.ndarray) -> np.ndarray:
        return np.einsum("qa,ca->cq", REF_VALUES, np.asarray(nodal)[self.mesh.cells])

    def scalar_grad(self, nodal: np.ndarray) -> np.ndarray:
        return np.einsum("cqad,ca->cqd", self.grads, np.asarray(nodal)[self.mesh.cells])

    def vector(self, nodal: np.ndarray) -> np.ndarray:
        return np.einsum("qa,cak->cqk", REF_VALUES, np.asarray(nodal)[self.mesh.cells])

    def vector_grad(self, nodal: np.ndarray) -> np.ndarray:
        # [c, q, componente, dirección]
        return np.einsum("cqad,cak->cqkd", self.grads, np.asarray(nodal)[self.mesh.cells])


@dataclass(frozen=True, eq=False)
class FaceValues:
    """Puntos de Gauss de cara con las funciones de forma de la celda propietaria."""

    cells: np.ndarray    # (nf,)
    values: np.ndarray   # (nf, 2, 4)
    jxw: np.ndarray      # (nf, 2)
    points: np.ndarray   # (nf, 2, 2)


CellKernel = Callable[[CellValues], Tuple[Optional[np.ndarray], Optional[np.ndarray]]]
FaceKernel = Callable[[FaceValues], Tuple[Optional[np.ndarray], Optional[np.ndarray]]]


def _jacobians(coords: np.ndarray, ref_grads: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    jac = np.einsum("...ad,...ae->...de", coords, ref_grads)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    return jac, det


def cell_values(mesh: QuadMesh) -> CellValues:
    cached = mesh.__dict__.get("_cell_values")
    if cached is None:
        cached = _compute_cell_values(mesh)
        mesh.__dict__["_cell_values"] = cached
    return cached


def _compute_cell_values(mesh: QuadMesh) -> CellValues:
    coords = mesh.vertices[mesh.cells][:, None, :, :]  # (nc, 1, 4, 2)
    jac, det = _jacobians(coords, REF_GRADS[None, :, :, :])
    scale = mesh.cell_areas.min() if mesh.n_cells else 1.0
    if np.any(det <= 1e-14 * scale):
        bad = np.flatnonzero((det <= 1e-14 * scale).any(axis=1))
        logger.error("Degenerate cell mapping", cells=bad[:10].tolist())
        raise AssemblyError(f"singular mapping Jacobian in {bad.size} cells")
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1] / det
    inv[..., 1, 1] = jac[..., 0, 0] / det
    inv[..., 0, 1] = -jac[..., 0, 1] / det
    inv[..., 1, 0] = -jac[..., 1, 0] / det
    grads = np.einsum("qae,cqed->cqad", REF_GRADS, inv)
    points = np.einsum("qa,cad->cqd", REF_VALUES, mesh.vertices[mesh.cells])
    return CellValues(mesh=mesh, grads=grads, jxw=det * QUAD_WEIGHTS, points=points)


def _face_reference_points(local_face: np.ndarray) -> np.ndarray:
    t = GAUSS_1D
    table = np.array(
        [
            [[t[0], 0.0], [t[1], 0.0]],
            [[1.0, t[0]], [1.0, t[1]]],
            [[t[0], 1.0], [t[1], 1.0]],
            [[0.0, t[0]], [0.0, t[1]]],
        ]
    )
    return table[local_face]


def face_values(mesh: QuadMesh, cells: np.ndarray, local_faces: np.ndarray) -> FaceValues:
    cells = np.asarray(cells, dtype=np.int64)
    local_faces = np.asarray(local_faces, dtype=np.int64)
    ref = _face_reference_points(local_faces)  # (nf, 2, 2)
    values, _ = q1_shape(ref)
    ends = np.array(FACE_VERTICES)[local_faces]
    verts = mesh.cells[cells]
    a = mesh.vertices[np.take_along_axis(verts, ends[:, :1], axis=1)[:, 0]]
    b = mesh.vertices[np.take_along_axis(verts, ends[:, 1:], axis=1)[:, 0]]
    length = np.linalg.norm(b - a, axis=1)
    points = np.einsum("fqa,fad->fqd", values, mesh.vertices[verts])
    jxw = length[:, None] * GAUSS_1D_WEIGHTS[None, :]
    return FaceValues(cells=cells, values=values, jxw=jxw, points=points)


def _canonical(matrix) -> sp.csr_matrix:
    matrix = sp.csr_matrix(matrix)
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def _scatter(Ke: Optional[np.ndarray], Fe: Optional[np.ndarray], dofs: np.ndarray, n: int):
    A = None
    b = np.zeros(n)
    if Ke is not None:
        nd = dofs.shape[1]
        rows = np.repeat(dofs, nd, axis=1).ravel()
        cols = np.tile(dofs, (1, nd)).ravel()
        A = _canonical(sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)))
    if Fe is not None:
        b = np.bincount(dofs.ravel(), weights=Fe.ravel(), minlength=n)
    return A, b


def condense(dofmap: DofMap, A: Optional[sp.csr_matrix], b: np.ndarray):
    """Condensa las restricciones colgantes: A_c = T^T A T, b_c = T^T b."""
    constrained = dofmap.constrained_dofs
    if constrained.size == 0:
        return A, b
    T = dofmap.constraint_matrix
    b_c = T.T @ b
    b_c[constrained] = 0.0
    if A is None:
        return None, b_c
    A_c = T.T @ A @ T
    diag = np.abs(A.diagonal())
    scale = float(diag[diag > 0].mean()) if np.any(diag > 0) else 1.0
    pin = sp.csr_matrix(
        (np.full(constrained.size, scale), (constrained, constrained)), shape=A.shape
    )
    return _canonical(A_c + pin), b_c


def assemble(
    mesh: QuadMesh,
    dofmap: DofMap,
    kernel: CellKernel,
    face_kernel: Optional[FaceKernel] = None,
    faces: Optional[Tuple[np.ndarray, np.ndarray]] = None
) -> Tuple[Optional[sp.csr_matrix], np.ndarray]:
    """
    Ensambla matriz y vector globales con restricciones colgantes condensadas.

    Args:
        mesh: Malla
        dofmap: Numeración de dofs
        kernel: Contribuciones locales por celda, vectorizadas sobre todas las celdas
        face_kernel: Contribuciones sobre el conjunto de caras marcado (solo campos escalares)
        faces: Par (celdas, cara local) donde se evalúa face_kernel

    Returns:
        (matriz CSR o None, vector)
    """
    cv = cell_values(mesh)
    Ke, Fe = kernel(cv)
    A, b = _scatter(Ke, Fe, dofmap.cell_dofs, dofmap.n_dofs)

    if face_kernel is not None and faces is not None and len(faces[0]) > 0:
        if dofmap.n_components != 1:
            raise AssemblyError("face kernels are only supported for scalar fields")
        fv = face_values(mesh, faces[0], faces[1])
        Kf, Ff = face_kernel(fv)
        Af, bf = _scatter(Kf, Ff, dofmap.cell_dofs[fv.cells], dofmap.n_dofs)
        if Af is not None:
            A = Af if A is None else _canonical(A + Af)
        b = b + bf

    return condense(dofmap, A, b)


def apply_dirichlet(A: sp.csr_matrix, b: np.ndarray, dofs, values=0.0):
    """
    Eliminación simétrica de dofs prescritos.

    Las filas y columnas de ``dofs`` se anulan; la diagonal se fija a la escala
    media de la matriz y el lado derecho al valor prescrito por esa escala.
    """
    dofs = np.asarray(dofs, dtype=np.int64)
    if dofs.size == 0:
        return A.copy(), np.array(b, dtype=float, copy=True)
    n = A.shape[0]
    v = np.zeros(n)
    v[dofs] = values
    mask = np.zeros(n, dtype=bool)
    mask[dofs] = True

    b_new = np.asarray(b, dtype=float) - A @ v
    diag = np.abs(A.diagonal())
    free = diag[~mask]
    scale = float(free[free > 0].mean()) if np.any(free > 0) else 1.0
    keep = sp.diags((~mask).astype(float))
    A_new = keep @ A @ keep + sp.diags(mask.astype(float) * scale)
    b_new[mask] = scale * v[mask]
    return _canonical(A_new), b_new


def evaluate_at_points(
    mesh: QuadMesh,
    field: np.ndarray,
    points: np.ndarray,
    cells: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Evalúa un campo nodal Q1 (n_vertices,) o (n_vertices, k) y su gradiente.

    Returns:
        valores (np,) o (np, k) y gradientes (np, 2) o (np, k, 2)
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if cells is None:
        cells = mesh.locate(pts)
    ref = mesh.reference_coordinates(cells, pts)
    values, ref_grads = q1_shape(ref)
    grads = ref_grads / mesh.cell_extent[cells][:, None, :]
    local = np.asarray(field, dtype=float)[mesh.cells[cells]]
    if local.ndim == 2:
        return np.einsum("pa,pa->p", values, local), np.einsum("pad,pa->pd", grads, local)
    return (
        np.einsum("pa,pak->pk", values, local),
        np.einsum("pad,pak->pkd", grads, local),
    )


def integrate(mesh: QuadMesh, qp_values: np.ndarray) -> float:
    """Integral sobre el dominio de valores dados en los puntos de Gauss (nc, nq)."""
    return float(np.sum(cell_values(mesh).jxw * qp_values))


def l2_norm(mesh: QuadMesh, field: np.ndarray) -> float:
    cv = cell_values(mesh)
    field = np.asarray(field, dtype=float)
    if field.ndim == 1:
        sq = cv.scalar(field) ** 2
    else:
        sq = np.sum(cv.vector(field) ** 2, axis=-1)
    return float(np.sqrt(np.sum(cv.jxw * sq)))


def mass_kernel(coefficient: Union[float, np.ndarray] = 1.0) -> CellKernel:
    def kernel(cv: CellValues):
        w = cv.jxw * coefficient
        return np.einsum("cq,qa,qb->cab", w, REF_VALUES, REF_VALUES), None
    return kernel


def laplace_kernel(
    diffusion: Union[float, np.ndarray] = 1.0,
    source: Union[float, np.ndarray] = 0.0
) -> CellKernel:
    """(diffusion grad u, grad v) + (source, v); coeficientes escalares o por punto (nc, nq)."""
    def kernel(cv: CellValues):
        w = cv.jxw * diffusion
        Ke = np.einsum("cq,cqad,cqbd->cab", w, cv.grads, cv.grads)
        Fe = np.einsum("cq,qa->ca", cv.jxw * source, REF_VALUES)
        return Ke, Fe
    return kernel
