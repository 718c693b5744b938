import math
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from app.config import settings
from app.schemas.parameters import FlowParams, WidthParams


class FractureSpec(BaseModel):
    center: Tuple[float, float]
    half_length: float = Field(gt=0)
    angle_deg: float = 0.0
    half_thickness: Optional[float] = Field(default=None, gt=0)  # None -> h_min de la malla

    @property
    def direction(self) -> Tuple[float, float]:
        a = math.radians(self.angle_deg)
        return math.cos(a), math.sin(a)

    @property
    def tips(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        dx, dy = self.direction
        cx, cy = self.center
        l0 = self.half_length
        return (cx - l0 * dx, cy - l0 * dy), (cx + l0 * dx, cy + l0 * dy)


class RefineBox(BaseModel):
    box: Tuple[float, float, float, float]
    levels: int = Field(ge=0)


class MeshSpec(BaseModel):
    n_uniform: int = Field(default=5, ge=0)
    boxes: List[RefineBox] = Field(default_factory=list)
    epsilon: Optional[float] = Field(default=None, gt=0)
    epsilon_factor: float = Field(default=2.0, gt=0)
    kappa_factor: float = Field(default=1e-10, gt=0)


class MaterialSpec(BaseModel):
    youngs_modulus: float = Field(default=1.0, gt=0)
    poisson_ratio: float = Field(default=0.2, gt=-1.0, lt=0.5)
    g_c: float = Field(default=1.0, gt=0)


class HeterogeneitySpec(BaseModel):
    enabled: bool = False
    seed: int = 0
    block_size: float = Field(default=0.5, gt=0)
    e_range: Tuple[float, float] = (1e7, 1e8)
    k_range_darcy: Tuple[float, float] = (0.1, 1.0)

    @model_validator(mode="after")
    def check_ranges(self):
        if self.e_range[0] > self.e_range[1] or self.k_range_darcy[0] > self.k_range_darcy[1]:
            raise ValueError("heterogeneity ranges must be ordered (low, high)")
        if self.e_range[0] <= 0 or self.k_range_darcy[0] <= 0:
            raise ValueError("heterogeneity ranges must be positive")
        return self


class CouplingConfig(BaseModel):
    tol_pressure: float = Field(default=1e-3, gt=0)
    tol_displacement: float = Field(default=1e-3, gt=0)
    tol_phasefield: float = Field(default=1e-3, gt=0)
    max_fs_iters: int = Field(default=50, gt=0)
    dt: float = Field(default=1.0, gt=0)
    end_time: float = Field(default=10.0, ge=0)
    pc_max_rounds: int = Field(default_factory=lambda: settings.pc_max_rounds, ge=0)
    c_ref: float = Field(default_factory=lambda: settings.c_ref, ge=0, le=1)
    relative_increments: bool = True
    extrapolation: Literal["linear", "lagged"] = "linear"
    divergence_guard: bool = True

    @property
    def n_steps(self) -> int:
        return int(round(self.end_time / self.dt))


class OutputSpec(BaseModel):
    directory: str = Field(default_factory=lambda: settings.output_dir)
    vtk_stride: int = Field(default=1, ge=0)  # 0 desactiva VTK
    tip_pressure: bool = False


class ScenarioConfig(BaseModel):
    name: str = "custom"
    domain: Tuple[float, float, float, float] = (0.0, 4.0, 0.0, 4.0)
    fractures: List[FractureSpec] = Field(default_factory=list)
    mesh: MeshSpec = Field(default_factory=MeshSpec)
    material: MaterialSpec = Field(default_factory=MaterialSpec)
    flow: FlowParams = Field(default_factory=FlowParams)
    width: WidthParams = Field(default_factory=WidthParams)
    coupling: CouplingConfig = Field(default_factory=CouplingConfig)
    heterogeneity: HeterogeneitySpec = Field(default_factory=HeterogeneitySpec)
    output: OutputSpec = Field(default_factory=OutputSpec)
    seed: int = 0

    @model_validator(mode="after")
    def check_geometry(self):
        x0, x1, y0, y1 = self.domain
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"invalid domain {self.domain}")

        def inside(p):
            return x0 <= p[0] <= x1 and y0 <= p[1] <= y1

        for fracture in self.fractures:
            if not all(inside(tip) for tip in fracture.tips):
                raise ValueError(f"fracture centred at {fracture.center} leaves the domain")
        for box in self.mesh.boxes:
            bx0, bx1, by0, by1 = box.box
            if bx0 < x0 or bx1 > x1 or by0 < y0 or by1 > y1:
                raise ValueError(f"refinement box {box.box} outside the domain")
        return self
