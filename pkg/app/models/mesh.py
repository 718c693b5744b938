from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp

# Resolución entera de las coordenadas de vértices (2**MAX_LEVEL por lado)
MAX_LEVEL = 30

# Caras locales: 0 abajo, 1 derecha, 2 arriba, 3 izquierda
FACE_OFFSETS = ((0, -1), (1, 0), (0, 1), (-1, 0))
FACE_VERTICES = ((0, 1), (1, 2), (2, 3), (3, 0))


@dataclass(frozen=True)
class ConstraintSet:
    """Restricciones de nodos colgantes: nodo -> ((maestro, peso), ...)."""

    entries: Dict[int, Tuple[Tuple[int, float], ...]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, node: int) -> bool:
        return node in self.entries

    @property
    def nodes(self) -> np.ndarray:
        return np.array(sorted(self.entries), dtype=np.int64)

    def matrix(self, n_nodes: int, n_components: int = 1) -> sp.csr_matrix:
        """Matriz T con x_completo = T x_maestros (columna propia nula en nodos colgantes)."""
        rows, cols, vals = [], [], []
        for node in range(n_nodes):
            masters = self.entries.get(node)
            for comp in range(n_components):
                row = node * n_components + comp
                if masters is None:
                    rows.append(row)
                    cols.append(row)
                    vals.append(1.0)
                else:
                    for m, w in masters:
                        rows.append(row)
                        cols.append(m * n_components + comp)
                        vals.append(w)
        n = n_nodes * n_components
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass(frozen=True, eq=False)
class FaceTable:
    """Caras de la malla, cada una registrada una sola vez desde la celda fina."""

    cell: np.ndarray
    local_face: np.ndarray
    neighbor: np.ndarray  # -1 en la frontera del dominio

    def __len__(self) -> int:
        return int(self.cell.size)

    @property
    def interior(self) -> np.ndarray:
        return self.neighbor >= 0


@dataclass(frozen=True, eq=False)
class QuadMesh:
    """
    Malla cuadtree 1-irregular de cuadriláteros alineados con los ejes.

    ``cell_keys`` guarda (nivel, i, j) de cada celda activa; la celda cubre
    [i, i+1] x [j, j+1] en unidades de L / 2**nivel. Los vértices de cada
    celda se ordenan en sentido antihorario desde la esquina inferior izquierda.
    """

    bounds: Tuple[float, float, float, float]
    cell_keys: np.ndarray
    vertices: np.ndarray
    vertex_keys: np.ndarray
    cells: np.ndarray
    constraints: ConstraintSet
    material_id: np.ndarray

    @property
    def n_cells(self) -> int:
        return int(self.cells.shape[0])

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def levels(self) -> np.ndarray:
        return self.cell_keys[:, 0]

    @property
    def max_level(self) -> int:
        return int(self.levels.max())

    @property
    def domain_size(self) -> Tuple[float, float]:
        x0, x1, y0, y1 = self.bounds
        return x1 - x0, y1 - y0

    @cached_property
    def cell_extent(self) -> np.ndarray:
        lx, ly = self.domain_size
        n = np.ldexp(1.0, -self.levels.astype(np.int64))
        return np.column_stack([lx * n, ly * n])

    @cached_property
    def cell_diameter(self) -> np.ndarray:
        return np.hypot(self.cell_extent[:, 0], self.cell_extent[:, 1])

    @property
    def h_min(self) -> float:
        return float(self.cell_diameter.min())

    @property
    def h_max(self) -> float:
        return float(self.cell_diameter.max())

    @property
    def cell_areas(self) -> np.ndarray:
        return self.cell_extent[:, 0] * self.cell_extent[:, 1]

    @property
    def cell_lower_left(self) -> np.ndarray:
        return self.vertices[self.cells[:, 0]]

    @property
    def cell_centers(self) -> np.ndarray:
        return self.cell_lower_left + 0.5 * self.cell_extent

    @cached_property
    def leaf_index(self) -> Dict[Tuple[int, int, int], int]:
        return {(int(l), int(i), int(j)): c for c, (l, i, j) in enumerate(self.cell_keys)}

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        top = 1 << MAX_LEVEL
        k = self.vertex_keys
        return (k[:, 0] == 0) | (k[:, 0] == top) | (k[:, 1] == 0) | (k[:, 1] == top)

    def parent_key(self, cell: int) -> Optional[Tuple[int, int, int]]:
        level, i, j = (int(v) for v in self.cell_keys[cell])
        if level == 0:
            return None
        return level - 1, i >> 1, j >> 1

    def child_keys(self, cell: int) -> Tuple[Tuple[int, int, int], ...]:
        level, i, j = (int(v) for v in self.cell_keys[cell])
        return tuple((level + 1, 2 * i + a, 2 * j + b) for b in (0, 1) for a in (0, 1))

    def covering_cell(self, level: int, i: int, j: int) -> int:
        """Celda activa que contiene la posición (nivel, i, j).

        Devuelve -2 fuera del dominio y -1 si la posición está refinada.
        """
        n = 1 << level
        if i < 0 or j < 0 or i >= n or j >= n:
            return -2
        for k in range(level, -1, -1):
            idx = self.leaf_index.get((k, i >> (level - k), j >> (level - k)))
            if idx is not None:
                return idx
        return -1

    @cached_property
    def faces(self) -> FaceTable:
        cells, local, neighbors = [], [], []
        levels = self.levels
        for c, (level, i, j) in enumerate(self.cell_keys):
            level, i, j = int(level), int(i), int(j)
            for f, (di, dj) in enumerate(FACE_OFFSETS):
                nb = self.covering_cell(level, i + di, j + dj)
                if nb == -1:
                    continue
                if nb == -2:
                    nb = -1
                elif levels[nb] == level and nb < c:
                    continue
                cells.append(c)
                local.append(f)
                neighbors.append(nb)
        return FaceTable(
            cell=np.array(cells, dtype=np.int64),
            local_face=np.array(local, dtype=np.int64),
            neighbor=np.array(neighbors, dtype=np.int64),
        )

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Celda activa que contiene cada punto (puntos en el borde: cualquiera de las vecinas)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x0, x1, y0, y1 = self.bounds
        tol = 1e-12 * max(x1 - x0, y1 - y0)
        if (
            np.any(pts[:, 0] < x0 - tol) or np.any(pts[:, 0] > x1 + tol)
            or np.any(pts[:, 1] < y0 - tol) or np.any(pts[:, 1] > y1 + tol)
        ):
            raise ValueError("point outside mesh domain")
        sx = np.clip((pts[:, 0] - x0) / (x1 - x0), 0.0, 1.0)
        sy = np.clip((pts[:, 1] - y0) / (y1 - y0), 0.0, 1.0)
        result = np.full(pts.shape[0], -1, dtype=np.int64)
        for level in range(self.max_level + 1):
            pending = np.flatnonzero(result < 0)
            if pending.size == 0:
                break
            n = 1 << level
            ii = np.minimum((sx[pending] * n).astype(np.int64), n - 1)
            jj = np.minimum((sy[pending] * n).astype(np.int64), n - 1)
            for p, i, j in zip(pending, ii, jj):
                idx = self.leaf_index.get((level, int(i), int(j)))
                if idx is not None:
                    result[p] = idx
        return result

    def reference_coordinates(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Coordenadas (xi, eta) en [0,1]^2 de cada punto dentro de su celda."""
        ref = (np.atleast_2d(points) - self.cell_lower_left[cells]) / self.cell_extent[cells]
        return np.clip(ref, 0.0, 1.0)

    def with_material_ids(self, material_id: np.ndarray) -> "QuadMesh":
        new = replace(self, material_id=np.asarray(material_id, dtype=np.int8))
        # La geometría no cambia: se comparten las cachés derivadas
        for name, value in self.__dict__.items():
            if name not in new.__dict__:
                new.__dict__[name] = value
        return new


@dataclass(frozen=True, eq=False)
class InterfaceSet:
    """Caras entre celdas de fractura (material 0) y de reservorio (material 1)."""

    cell: np.ndarray            # celda desde la que se integra la cara (lado fino)
    local_face: np.ndarray
    fracture_cell: np.ndarray
    reservoir_cell: np.ndarray

    def __len__(self) -> int:
        return int(self.cell.size)

    @property
    def faces(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.cell, self.local_face
