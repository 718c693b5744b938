import csv
import os
from typing import List, Optional

import meshio
import numpy as np
import structlog

from app.config import settings
from app.models.state import CellCoefficients, FieldState
from app.schemas.report import QOI_COLUMNS, CodSample, QoiSeries

logger = structlog.get_logger()


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _padded(points: np.ndarray) -> np.ndarray:
    """Completa coordenadas o vectores 2D con una componente z nula."""
    points = np.asarray(points, dtype=float)
    return np.column_stack([points, np.zeros(len(points))])


class OutputStorage:
    """Escritura de resultados en disco: instantáneas VTK y series CSV."""

    def __init__(self, directory: Optional[str] = None):
        self.directory = directory or settings.output_dir
        os.makedirs(self.directory, exist_ok=True)
        logger.info("Output storage initialized", directory=self.directory)

    def _path(self, name: str) -> str:
        return os.path.join(self.directory, name)

    def write_vtk(
        self,
        state: FieldState,
        index: int,
        coefficients: Optional[CellCoefficients] = None
    ) -> str:
        """
        Guarda una instantánea VTK legacy ASCII (malla no estructurada de cuadriláteros).

        Args:
            state: Campos nodales sobre su malla
            index: Número de la instantánea (solution_XXXX.vtk)
            coefficients: Coeficientes por celda opcionales (E, K_R)

        Returns:
            Ruta del fichero escrito
        """
        mesh = state.mesh
        path = self._path(f"solution_{index:04d}.vtk")
        cell_data = {"material_id": [mesh.material_id.astype(np.int32)]}
        if coefficients is not None:
            cell_data["youngs_modulus"] = [np.asarray(coefficients.youngs_modulus, dtype=float)]
            cell_data["permeability"] = [np.asarray(coefficients.permeability, dtype=float)]
        snapshot = meshio.Mesh(
            _padded(mesh.vertices),
            [("quad", mesh.cells)],
            point_data={
                "pressure": state.pressure,
                "phasefield": state.phasefield,
                "levelset": state.levelset,
                "width": state.width,
                "displacement": _padded(state.displacement),
            },
            cell_data=cell_data,
        )
        try:
            meshio.write(path, snapshot, file_format="vtk", binary=False)
        except OSError as e:
            logger.error("Error writing VTK file", error=str(e), path=path)
            raise
        logger.debug("VTK written", path=path, cells=mesh.n_cells, time=state.time, step=state.step)
        return path

    def write_qoi(self, series: QoiSeries, with_tip_pressure: bool = False) -> str:
        """Escribe qoi.csv con una fila por paso de tiempo."""
        path = self._path("qoi.csv")
        header = list(QOI_COLUMNS) + (["min_p_axis"] if with_tip_pressure else [])
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            for report in series.reports:
                writer.writerow([
                    v if isinstance(v, int) else _fmt(v) if v is not None else ""
                    for v in report.csv_row(with_tip_pressure)
                ])
        logger.info("QoI written", path=path, rows=len(series.reports))
        return path

    def write_cod(self, samples: List[CodSample]) -> str:
        path = self._path("cod.csv")
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["x", "cod", "analytic_cod"])
            for sample in samples:
                writer.writerow([_fmt(sample.x), _fmt(sample.cod), _fmt(sample.analytic_cod)])
        logger.info("COD profile written", path=path, samples=len(samples))
        return path
