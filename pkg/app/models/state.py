from dataclasses import dataclass, replace

import numpy as np

from app.models.mesh import QuadMesh


@dataclass(frozen=True)
class CellCoefficients:
    """Coeficientes materiales por celda (constantes a trozos)."""

    youngs_modulus: np.ndarray
    lame_lambda: np.ndarray
    shear_modulus: np.ndarray
    permeability: np.ndarray  # K_R en m^2

    @property
    def n_cells(self) -> int:
        return int(self.youngs_modulus.size)


@dataclass(frozen=True)
class MechState:
    """Desplazamiento (n_vertices, 2) y campo de fase con su historia temporal."""

    displacement: np.ndarray
    phasefield: np.ndarray
    phasefield_prev: np.ndarray

    def packed(self) -> np.ndarray:
        """Vector (u_x, u_y, phi) intercalado por nodo."""
        return np.column_stack([self.displacement, self.phasefield]).ravel()

    def with_packed(self, x: np.ndarray) -> "MechState":
        block = np.asarray(x).reshape(-1, 3)
        return replace(self, displacement=block[:, :2].copy(), phasefield=block[:, 2].copy())


@dataclass(frozen=True)
class FieldState:
    """Campos nodales de un nivel temporal sobre una malla."""

    mesh: QuadMesh
    pressure: np.ndarray
    displacement: np.ndarray
    phasefield: np.ndarray
    levelset: np.ndarray
    width: np.ndarray
    time: float = 0.0
    step: int = 0

    @classmethod
    def initial(cls, mesh: QuadMesh, phasefield: np.ndarray, c_ls: float) -> "FieldState":
        n = mesh.n_vertices
        return cls(
            mesh=mesh,
            pressure=np.zeros(n),
            displacement=np.zeros((n, 2)),
            phasefield=np.asarray(phasefield, dtype=float).copy(),
            levelset=np.asarray(phasefield, dtype=float) - c_ls,
            width=np.zeros(n),
        )
