import csv
import os

import meshio
import numpy as np
import pytest

from app.models.state import FieldState
from app.schemas.report import CodSample, QoiSeries, TimeStepReport
from app.services.storage import OutputStorage
from tests.conftest import homogeneous_coefficients


@pytest.fixture
def storage(tmp_path):
    return OutputStorage(str(tmp_path / "results"))


def _state(mesh):
    rng = np.random.default_rng(2)
    n = mesh.n_vertices
    return FieldState(
        mesh=mesh.with_material_ids(rng.integers(0, 2, size=mesh.n_cells).astype(np.int8)),
        pressure=rng.normal(size=n) * 1e5,
        displacement=rng.normal(size=(n, 2)) * 1e-7,
        phasefield=rng.uniform(size=n),
        levelset=rng.normal(size=n),
        width=rng.uniform(size=n) * 1e-4,
        time=0.37,
        step=37,
    )


def test_output_directory_created(tmp_path):
    OutputStorage(str(tmp_path / "a" / "b"))
    assert os.path.isdir(tmp_path / "a" / "b")


def test_vtk_round_trip(storage, graded_mesh):
    state = _state(graded_mesh)
    coeffs = homogeneous_coefficients(graded_mesh, youngs_modulus=3e7, permeability=2e-13)
    path = storage.write_vtk(state, 12, coeffs)
    assert os.path.basename(path) == "solution_0012.vtk"

    data = meshio.read(path)
    np.testing.assert_allclose(data.points[:, :2], graded_mesh.vertices, rtol=1e-12)
    np.testing.assert_array_equal(data.cells_dict["quad"], graded_mesh.cells)
    for name in ("pressure", "phasefield", "levelset", "width"):
        np.testing.assert_allclose(data.point_data[name], getattr(state, name), rtol=1e-12)
    np.testing.assert_allclose(data.point_data["displacement"][:, :2], state.displacement, rtol=1e-12)
    np.testing.assert_array_equal(data.cell_data["material_id"][0], state.mesh.material_id)
    np.testing.assert_allclose(data.cell_data["youngs_modulus"][0], 3e7)
    np.testing.assert_allclose(data.cell_data["permeability"][0], 2e-13)


def test_vtk_without_coefficients(storage, unit_mesh):
    data = meshio.read(storage.write_vtk(_state(unit_mesh), 0))
    assert set(data.cell_data) == {"material_id"}
    assert not data.points[:, 2].any()


def test_qoi_csv(storage):
    series = QoiSeries(reports=[
        TimeStepReport(step=1, time=0.01, fs_iterations=3, newton_iterations_total=7,
                       gmres_iterations_total=40, max_pressure=1.5e5, max_width=2e-4,
                       half_length=0.21, cod_center=3e-4, min_pressure_axis=-2.0),
        TimeStepReport(step=2, time=0.02, fs_iterations=2),
    ])
    path = storage.write_qoi(series, with_tip_pressure=True)
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == [
        "time", "fs_iters", "newton_iters", "gmres_iters",
        "max_p", "max_w", "half_length", "cod_center", "min_p_axis",
    ]
    assert len(rows) == 3
    assert rows[1][1:4] == ["3", "7", "40"]
    assert float(rows[1][4]) == 1.5e5
    assert float(rows[1][8]) == -2.0
    assert rows[2][8] == ""


def test_cod_csv(storage):
    samples = [CodSample(x=1.8, cod=0.0, analytic_cod=0.0), CodSample(x=2.0, cod=7.5e-4, analytic_cod=7.68e-4)]
    with open(storage.write_cod(samples), newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["x", "cod", "analytic_cod"]
    assert [float(v) for v in rows[2]] == [2.0, 7.5e-4, 7.68e-4]
