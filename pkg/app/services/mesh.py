from typing import Dict, Iterable, Optional, Sequence, Set, Tuple

import numpy as np
import structlog

from app.errors import ConfigurationError
from app.models.mesh import (
    FACE_OFFSETS,
    FACE_VERTICES,
    MAX_LEVEL,
    ConstraintSet,
    QuadMesh,
)
from app.services.fem import evaluate_at_points

logger = structlog.get_logger()

Key = Tuple[int, int, int]
Rect = Tuple[float, float, float, float]


def _covering(leaves: Set[Key], level: int, i: int, j: int) -> Optional[Key]:
    for k in range(level, -1, -1):
        key = (k, i >> (level - k), j >> (level - k))
        if key in leaves:
            return key
    return None


def _split(leaves: Set[Key], key: Key) -> None:
    """Divide una hoja en 4 hijas, refinando antes las vecinas más gruesas."""
    if key not in leaves:
        return
    level, i, j = key
    n = 1 << level
    for di, dj in FACE_OFFSETS:
        ni, nj = i + di, j + dj
        if not (0 <= ni < n and 0 <= nj < n):
            continue
        cover = _covering(leaves, level, ni, nj)
        if cover is not None and cover[0] < level:
            _split(leaves, cover)
    leaves.remove(key)
    leaves.update((level + 1, 2 * i + a, 2 * j + b) for a in (0, 1) for b in (0, 1))


def _resolve_constraints(raw: Dict[int, Tuple[Tuple[int, float], ...]]) -> ConstraintSet:
    # Cadenas de nodos colgantes: se expanden hasta maestros libres
    memo: Dict[int, Tuple[Tuple[int, float], ...]] = {}

    def resolve(node: int) -> Tuple[Tuple[int, float], ...]:
        if node in memo:
            return memo[node]
        acc: Dict[int, float] = {}
        for master, weight in raw[node]:
            if master in raw:
                for m, w in resolve(master):
                    acc[m] = acc.get(m, 0.0) + weight * w
            else:
                acc[master] = acc.get(master, 0.0) + weight
        memo[node] = tuple(sorted(acc.items()))
        return memo[node]

    return ConstraintSet({node: resolve(node) for node in sorted(raw)})


def _assemble_mesh(bounds: Rect, leaves: Iterable[Key], material: Optional[Dict[Key, int]] = None) -> QuadMesh:
    keys = np.array(sorted(leaves), dtype=np.int64)
    nc = keys.shape[0]
    scale = np.left_shift(np.int64(1), MAX_LEVEL - keys[:, 0])
    ix = keys[:, 1] * scale
    jy = keys[:, 2] * scale
    corners = np.stack(
        [
            np.column_stack([ix, jy]),
            np.column_stack([ix + scale, jy]),
            np.column_stack([ix + scale, jy + scale]),
            np.column_stack([ix, jy + scale]),
        ],
        axis=1,
    )
    vertex_keys, inverse = np.unique(corners.reshape(-1, 2), axis=0, return_inverse=True)
    cells = np.asarray(inverse).reshape(nc, 4)

    x0, x1, y0, y1 = bounds
    unit = float(1 << MAX_LEVEL)
    vertices = np.column_stack(
        [x0 + (x1 - x0) * vertex_keys[:, 0] / unit, y0 + (y1 - y0) * vertex_keys[:, 1] / unit]
    )

    vindex = {(int(a), int(b)): k for k, (a, b) in enumerate(vertex_keys)}
    raw: Dict[int, Tuple[Tuple[int, float], ...]] = {}
    for a, b in FACE_VERTICES:
        va, vb = cells[:, a], cells[:, b]
        mids = (vertex_keys[va] + vertex_keys[vb]) // 2
        for c in range(nc):
            k = vindex.get((int(mids[c, 0]), int(mids[c, 1])))
            if k is not None:
                raw[k] = ((int(va[c]), 0.5), (int(vb[c]), 0.5))

    if material is None:
        material_id = np.ones(nc, dtype=np.int8)
    else:
        material_id = np.array([material.get(tuple(k), 1) for k in keys.tolist()], dtype=np.int8)

    return QuadMesh(
        bounds=tuple(float(v) for v in bounds),
        cell_keys=keys,
        vertices=vertices,
        vertex_keys=vertex_keys.astype(np.int64),
        cells=cells.astype(np.int64),
        constraints=_resolve_constraints(raw),
        material_id=material_id,
    )


def _overlaps(bounds: Rect, key: Key, box: Rect) -> bool:
    x0, x1, y0, y1 = bounds
    level, i, j = key
    hx = (x1 - x0) / (1 << level)
    hy = (y1 - y0) / (1 << level)
    cx0, cy0 = x0 + i * hx, y0 + j * hy
    return cx0 < box[1] and cx0 + hx > box[0] and cy0 < box[3] and cy0 + hy > box[2]


def build_rect_mesh(
    domain: Rect,
    n_uniform: int,
    local_boxes: Sequence[Tuple[Rect, int]] = ()
) -> QuadMesh:
    """
    Construye la malla inicial: refinamiento global y después local por cajas.

    Args:
        domain: Rectángulo (x0, x1, y0, y1)
        n_uniform: Número de refinamientos globales
        local_boxes: Pares (rectángulo, niveles extra)

    Returns:
        QuadMesh 1-irregular
    """
    x0, x1, y0, y1 = domain
    if n_uniform < 0:
        raise ConfigurationError("n_uniform must be non-negative")
    if not (x1 > x0 and y1 > y0):
        raise ConfigurationError(f"invalid domain {domain}")
    for box, extra in local_boxes:
        bx0, bx1, by0, by1 = box
        if bx0 < x0 or bx1 > x1 or by0 < y0 or by1 > y1 or bx1 <= bx0 or by1 <= by0:
            raise ConfigurationError(f"refinement box {box} outside domain {domain}")
        if extra < 0:
            raise ConfigurationError("refinement levels must be non-negative")

    n = 1 << n_uniform
    leaves: Set[Key] = {(n_uniform, i, j) for i in range(n) for j in range(n)}
    for box, extra in local_boxes:
        for _ in range(extra):
            targets = sorted(k for k in leaves if _overlaps(domain, k, box))
            for key in targets:
                _split(leaves, key)

    mesh = _assemble_mesh(domain, leaves)
    logger.info(
        "Mesh built",
        cells=mesh.n_cells,
        vertices=mesh.n_vertices,
        hanging=len(mesh.constraints),
        h_min=mesh.h_min,
        h_max=mesh.h_max
    )
    return mesh


def refine(mesh: QuadMesh, flags: np.ndarray) -> QuadMesh:
    """Refina las celdas marcadas y cierra la malla para mantener la 1-irregularidad."""
    flags = np.asarray(flags, dtype=bool)
    if flags.shape != (mesh.n_cells,):
        raise ValueError("flags length must equal the number of active cells")
    if not flags.any():
        return mesh

    leaves: Set[Key] = {tuple(k) for k in mesh.cell_keys.tolist()}
    for c in np.flatnonzero(flags):
        _split(leaves, tuple(int(v) for v in mesh.cell_keys[c]))

    # Las hijas heredan el material de la celda de la que provienen
    material: Dict[Key, int] = {}
    for key in leaves:
        level, i, j = key
        for k in range(level, -1, -1):
            idx = mesh.leaf_index.get((k, i >> (level - k), j >> (level - k)))
            if idx is not None:
                material[key] = int(mesh.material_id[idx])
                break

    new_mesh = _assemble_mesh(mesh.bounds, leaves, material)
    logger.info(
        "Mesh refined",
        flagged=int(flags.sum()),
        cells_before=mesh.n_cells,
        cells_after=new_mesh.n_cells,
        h_min=new_mesh.h_min
    )
    return new_mesh


def max_level_jump(mesh: QuadMesh) -> int:
    """Máxima diferencia de nivel entre celdas que comparten cara."""
    faces = mesh.faces
    interior = faces.interior
    if not interior.any():
        return 0
    levels = mesh.levels
    return int(np.abs(levels[faces.cell[interior]] - levels[faces.neighbor[interior]]).max())


def predictor_corrector_flags(mesh: QuadMesh, phi: np.ndarray, epsilon: float, c_ref: float) -> np.ndarray:
    """Marca celdas en la zona de fractura cuya resolución viola h <= eps/2."""
    if not 0.0 <= c_ref <= 1.0:
        raise ConfigurationError("c_ref must lie in [0, 1]")
    cell_min = np.asarray(phi)[mesh.cells].min(axis=1)
    return (cell_min < c_ref) & (mesh.cell_diameter > 0.5 * epsilon)


def update_material_ids(mesh: QuadMesh, phi: np.ndarray, c_ls: float) -> QuadMesh:
    """material_id = 0 en celdas con mínimo nodal de phi < C_LS (fractura), 1 en el resto."""
    cell_min = np.asarray(phi)[mesh.cells].min(axis=1)
    return mesh.with_material_ids(np.where(cell_min < c_ls, 0, 1))


def transfer_field(old_mesh: QuadMesh, new_mesh: QuadMesh, values: np.ndarray) -> np.ndarray:
    """Transfiere un campo nodal a una malla refinada (exacto para refinamiento puro)."""
    if old_mesh is new_mesh:
        return np.array(values, copy=True)
    values_new, _ = evaluate_at_points(old_mesh, values, new_mesh.vertices)
    return values_new
