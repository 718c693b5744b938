from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

# 1 darcy en m^2
DARCY = 1e-12


def lame_parameters(youngs_modulus, poisson_ratio):
    """(lambda, G) en deformación plana; acepta escalares o arrays."""
    lam = poisson_ratio * youngs_modulus / ((1 + poisson_ratio) * (1 - 2 * poisson_ratio))
    shear = youngs_modulus / (2 * (1 + poisson_ratio))
    return lam, shear


class ElasticParams(BaseModel):
    """Parámetros del sistema desplazamiento/campo de fase ya resueltos sobre la malla."""

    model_config = ConfigDict(frozen=True)

    youngs_modulus: float = Field(gt=0)
    poisson_ratio: float = Field(gt=-1.0, lt=0.5)
    g_c: float = Field(gt=0)
    epsilon: float = Field(gt=0)
    kappa: float = Field(gt=0, lt=1)
    alpha: float = Field(ge=0, le=1)

    @property
    def lame_lambda(self) -> float:
        return lame_parameters(self.youngs_modulus, self.poisson_ratio)[0]

    @property
    def shear_modulus(self) -> float:
        return lame_parameters(self.youngs_modulus, self.poisson_ratio)[1]


class FlowParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=0.0, ge=0, le=1)
    biot_modulus: float = Field(default=1e12, gt=0)
    c_f: float = Field(default=1e-12, ge=0)
    eta_r: float = Field(default=1e-3, gt=0)
    eta_f: float = Field(default=1e-3, gt=0)
    k_r: float = Field(default=1e-12, gt=0)  # m^2
    rho_r: float = Field(default=1.0, gt=0)
    rho_f: float = Field(default=1.0, gt=0)
    gravity: Tuple[float, float] = (0.0, 0.0)
    q_r: float = 0.0
    q_f: float = 0.0
    c_x: float = Field(default=0.1, gt=0, lt=0.5)
    source_centers: List[Tuple[float, float]] = Field(default_factory=list)
    source_radius: Optional[float] = Field(default=None, gt=0)  # None -> 2 epsilon
    source_mode: Literal["density", "rate"] = "density"
    fixed_stress_denominator: Optional[float] = Field(default=None, gt=0)


class WidthParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    c_ls: float = Field(default=0.1, gt=0, lt=1)
    theta: float = Field(default=1e3, gt=0)
    beta: float = Field(default=100.0, gt=0)
    f1: float = -10.0
    f2: float = 10.0
    mode: Literal["shift", "poisson"] = "shift"
