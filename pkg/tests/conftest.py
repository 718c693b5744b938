import numpy as np
import pytest

from app.logging_setup import configure_logging
from app.models.state import CellCoefficients
from app.schemas.parameters import ElasticParams, lame_parameters
from app.schemas.scenario import (
    CouplingConfig,
    MeshSpec,
    OutputSpec,
    ScenarioConfig,
)
from app.services.mesh import build_rect_mesh


@pytest.fixture(autouse=True, scope="session")
def quiet_logging():
    configure_logging(level="WARNING", json_output=False)


@pytest.fixture
def unit_mesh():
    """Malla uniforme 4x4 del cuadrado unidad."""
    return build_rect_mesh((0.0, 1.0, 0.0, 1.0), 2)


@pytest.fixture
def graded_mesh():
    """Cuadrante inferior izquierdo refinado una vez: cuatro nodos colgantes."""
    return build_rect_mesh((0.0, 1.0, 0.0, 1.0), 2, [((0.0, 0.5, 0.0, 0.5), 1)])


def homogeneous_coefficients(mesh, youngs_modulus=1.0, poisson_ratio=0.2, permeability=1e-12):
    lam, shear = lame_parameters(youngs_modulus, poisson_ratio)
    n = mesh.n_cells
    return CellCoefficients(
        youngs_modulus=np.full(n, youngs_modulus),
        lame_lambda=np.full(n, lam),
        shear_modulus=np.full(n, shear),
        permeability=np.full(n, permeability),
    )


@pytest.fixture
def elastic_params():
    return ElasticParams(
        youngs_modulus=1.0, poisson_ratio=0.2, g_c=1.0, epsilon=0.5, kappa=1e-3, alpha=0.0
    )


@pytest.fixture
def quiet_config(tmp_path):
    """Escenario sin fracturas ni inyección: punto fijo trivial."""
    return ScenarioConfig(
        name="quiet",
        domain=(0.0, 1.0, 0.0, 1.0),
        mesh=MeshSpec(n_uniform=2),
        coupling=CouplingConfig(dt=1.0, end_time=2.0),
        output=OutputSpec(directory=str(tmp_path / "out"), vtk_stride=1),
    )
