from app.schemas.parameters import DARCY, ElasticParams, FlowParams, WidthParams, lame_parameters
from app.schemas.report import QOI_COLUMNS, CodSample, QoiSeries, TimeStepReport
from app.schemas.scenario import (
    CouplingConfig, FractureSpec, HeterogeneitySpec, MaterialSpec, MeshSpec,
    OutputSpec, RefineBox, ScenarioConfig
)

__all__ = [
    "DARCY", "ElasticParams", "FlowParams", "WidthParams", "lame_parameters",
    "QOI_COLUMNS", "CodSample", "QoiSeries", "TimeStepReport",
    "CouplingConfig", "FractureSpec", "HeterogeneitySpec", "MaterialSpec", "MeshSpec",
    "OutputSpec", "RefineBox", "ScenarioConfig"
]
