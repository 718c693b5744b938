from typing import List, Optional, Tuple

from pydantic import BaseModel, Field

QOI_COLUMNS = [
    "time", "fs_iters", "newton_iters", "gmres_iters",
    "max_p", "max_w", "half_length", "cod_center",
]


class TimeStepReport(BaseModel):
    step: int = Field(ge=0)
    time: float
    fs_iterations: int = Field(default=0, ge=0)
    fs_iterations_accumulated: int = Field(default=0, ge=0)
    newton_iterations_total: int = Field(default=0, ge=0)
    gmres_iterations_total: int = Field(default=0, ge=0)
    pc_rounds: int = Field(default=0, ge=0)
    active_cells: int = Field(default=0, ge=0)
    max_pressure: float = 0.0
    max_width: float = 0.0
    half_length: float = 0.0
    cod_center: float = 0.0
    total_crack_volume: float = 0.0
    min_pressure_axis: Optional[float] = None
    increments: List[Tuple[float, float, float]] = Field(default_factory=list)

    def csv_row(self, with_tip_pressure: bool = False) -> list:
        row = [
            self.time, self.fs_iterations, self.newton_iterations_total,
            self.gmres_iterations_total, self.max_pressure, self.max_width,
            self.half_length, self.cod_center,
        ]
        if with_tip_pressure:
            row.append(self.min_pressure_axis)
        return row


class CodSample(BaseModel):
    x: float
    cod: float
    analytic_cod: float


class QoiSeries(BaseModel):
    """Serie temporal de magnitudes de interés."""

    reports: List[TimeStepReport] = Field(default_factory=list)
    cod_profile: List[CodSample] = Field(default_factory=list)

    @property
    def max_pressures(self) -> List[float]:
        return [r.max_pressure for r in self.reports]

    @property
    def half_lengths(self) -> List[float]:
        return [r.half_length for r in self.reports]

    @property
    def max_widths(self) -> List[float]:
        return [r.max_width for r in self.reports]
