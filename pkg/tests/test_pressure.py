import numpy as np
import pytest

from app.config import settings
from app.errors import ConfigurationError
from app.schemas.parameters import FlowParams
from app.schemas.scenario import FractureSpec
from app.services.fem import DofMap, assemble, cell_values, laplace_kernel, mass_kernel
from app.services.linalg import direct_solve
from app.services.mesh import build_rect_mesh
from app.services.pressure import (
    chi_indicators,
    effective_mobility,
    fixed_stress_coefficient,
    fracture_permeability,
    fracture_source,
    solve_pressure,
    storage_integral,
)
from app.services.scenarios import initial_phasefield
from tests.conftest import homogeneous_coefficients


@pytest.fixture
def square_mesh():
    return build_rect_mesh((0.0, 4.0, 0.0, 4.0), 4)


def test_indicators_partition_unity():
    phi = np.random.default_rng(0).uniform(-0.2, 1.2, size=1000)
    chi_r, chi_f = chi_indicators(phi)
    np.testing.assert_allclose(chi_r + chi_f, 1.0)
    chi_r, chi_f = chi_indicators(np.array([0.0, 0.4, 0.5, 0.6, 1.0]))
    np.testing.assert_allclose(chi_f, [1.0, 1.0, 0.5, 0.0, 0.0], atol=1e-12)


def test_cubic_law():
    np.testing.assert_allclose(fracture_permeability([-0.1, 0.0, 0.12]), [0.0, 0.0, 0.0012])


def test_fixed_stress_coefficient(square_mesh):
    coeffs = homogeneous_coefficients(square_mesh, youngs_modulus=1e8)
    lam, shear = coeffs.lame_lambda[0], coeffs.shear_modulus[0]
    s = fixed_stress_coefficient(FlowParams(alpha=1.0), coeffs)
    np.testing.assert_allclose(s, 3.0 / (3.0 * lam + 2.0 * shear))
    s = fixed_stress_coefficient(FlowParams(alpha=0.5, fixed_stress_denominator=2.0), coeffs)
    np.testing.assert_allclose(s, 3.0 * 0.25 / 2.0)
    assert not fixed_stress_coefficient(FlowParams(alpha=0.0), coeffs).any()


def test_mobility_monotone_in_width():
    widths = np.linspace(-1e-3, 5e-3, 61)
    k_f = np.maximum(fracture_permeability(widths), 1e-12)
    mobility = effective_mobility(0.3, 0.7, 1e-12, 1e-3, k_f, 1e-3)
    assert np.all(np.diff(mobility) >= 0.0)
    assert np.all(np.diff(mobility[widths > 1e-5]) > 0.0)


def test_rate_source_integrates_to_rate(square_mesh):
    cv = cell_values(square_mesh)
    flow = FlowParams(q_f=2.0, source_centers=[(2.0, 2.0)], source_radius=0.6, source_mode="rate")
    q = fracture_source(cv, flow, 0.1, np.ones(cv.jxw.shape))
    assert float(np.sum(cv.jxw * q)) == pytest.approx(2.0)

    # solo la mitad superior del disco es fractura
    chi_f = (cv.points[..., 1] > 2.0).astype(float)
    q = fracture_source(cv, flow, 0.1, chi_f)
    assert float(np.sum(cv.jxw * q)) == pytest.approx(2.0)
    assert not q[cv.points[..., 1] < 2.0].any()

    assert not fracture_source(cv, FlowParams(q_f=2.0), 0.1, np.ones(cv.jxw.shape)).any()


def test_density_source_scales_with_indicator(square_mesh):
    cv = cell_values(square_mesh)
    flow = FlowParams(q_f=3.0, source_centers=[(2.0, 2.0)], source_radius=0.6)
    chi_f = np.full(cv.jxw.shape, 0.5)
    q = fracture_source(cv, flow, 0.1, chi_f)
    inside = np.hypot(cv.points[..., 0] - 2.0, cv.points[..., 1] - 2.0) <= 0.6
    np.testing.assert_allclose(q[inside], 1.5)
    assert not q[~inside].any()


def test_disc_outside_fracture_injects_nothing(square_mesh):
    cv = cell_values(square_mesh)
    flow = FlowParams(q_f=2.0, source_centers=[(2.0, 2.0)], source_radius=0.6, source_mode="rate")
    assert not fracture_source(cv, flow, 0.1, np.zeros(cv.jxw.shape)).any()


def test_reservoir_only_matches_heat_equation(square_mesh, monkeypatch):
    monkeypatch.setattr(settings, "pressure_linear_solver", "direct")
    flow = FlowParams(alpha=0.0, biot_modulus=2.0, k_r=1e-3, eta_r=1e-3)
    coeffs = homogeneous_coefficients(square_mesh, permeability=1e-3)
    n = square_mesh.n_vertices
    p_n = np.sin(square_mesh.vertices[:, 0]) * square_mesh.vertices[:, 1]
    zeros_u = np.zeros((n, 2))
    dt = 0.25
    P, _ = solve_pressure(
        square_mesh, flow, coeffs, p_n, zeros_u, zeros_u, p_n, np.ones(n), np.zeros(n), dt, 0.1
    )

    dofmap = DofMap(square_mesh, 1)
    M, _ = assemble(square_mesh, dofmap, mass_kernel(1.0 / (2.0 * dt)))
    K, _ = assemble(square_mesh, dofmap, laplace_kernel(1.0))
    expected = direct_solve((M + K).tocsr(), M @ p_n)
    np.testing.assert_allclose(P, expected, rtol=1e-10, atol=1e-12)


def test_mass_balance(square_mesh, monkeypatch):
    monkeypatch.setattr(settings, "pressure_linear_solver", "direct")
    flow = FlowParams(
        alpha=0.0, biot_modulus=1.0, c_f=1.0, k_r=1e-3, eta_r=1e-3,
        q_f=2.0, q_r=0.1, source_centers=[(2.0, 2.0)], source_radius=0.5,
    )
    coeffs = homogeneous_coefficients(square_mesh, permeability=1e-3)
    phi = initial_phasefield(
        square_mesh, [FractureSpec(center=(2.0, 2.0), half_length=0.6, half_thickness=0.3)]
    )
    n = square_mesh.n_vertices
    p_n = square_mesh.vertices[:, 0].copy()
    width = np.full(n, 0.01)
    zeros_u = np.zeros((n, 2))
    dt = 0.5
    P, _ = solve_pressure(square_mesh, flow, coeffs, p_n, zeros_u, zeros_u, p_n, phi, width, dt, 0.1)

    cv = cell_values(square_mesh)
    chi_r, chi_f = chi_indicators(cv.scalar(phi), flow.c_x)
    injected = dt * float(np.sum(cv.jxw * (chi_r * flow.q_r + fracture_source(cv, flow, 0.1, chi_f))))
    stored = storage_integral(square_mesh, P, phi, flow) - storage_integral(square_mesh, p_n, phi, flow)
    assert injected > 0.0
    assert stored == pytest.approx(injected, rel=1e-10)


def test_fixed_stress_consistency(square_mesh, monkeypatch):
    # Con el iterado igual al paso anterior la corrección fixed-stress desaparece
    monkeypatch.setattr(settings, "pressure_linear_solver", "direct")
    flow = FlowParams(alpha=1.0, biot_modulus=1.0, k_r=1e-3, eta_r=1e-3)
    coeffs = homogeneous_coefficients(square_mesh, permeability=1e-3)
    n = square_mesh.n_vertices
    p_n = np.full(n, 3.0)
    u = np.zeros((n, 2))
    P, _ = solve_pressure(square_mesh, flow, coeffs, p_n, u, u, p_n, np.ones(n), np.zeros(n), 1.0, 0.1)
    np.testing.assert_allclose(P, 3.0, rtol=1e-10)


def test_invalid_inputs(square_mesh):
    n = square_mesh.n_vertices
    coeffs = homogeneous_coefficients(square_mesh)
    u = np.zeros((n, 2))
    with pytest.raises(ConfigurationError):
        solve_pressure(square_mesh, FlowParams(), coeffs, np.zeros(n), u, u, np.zeros(n),
                       np.ones(n), np.zeros(n), 0.0, 0.1)
    # todo el dominio es fractura y el fluido es incompresible
    with pytest.raises(ConfigurationError):
        solve_pressure(square_mesh, FlowParams(c_f=0.0), coeffs, np.zeros(n), u, u, np.zeros(n),
                       np.zeros(n), np.zeros(n), 1.0, 0.1)


def test_closed_fracture_conducts_like_rock(square_mesh, monkeypatch):
    # Con W = 0 y la misma compresibilidad el problema es una ecuación del calor homogénea
    monkeypatch.setattr(settings, "pressure_linear_solver", "direct")
    flow = FlowParams(
        alpha=0.0, biot_modulus=1.0, c_f=1.0, k_r=1e-3, eta_r=1e-3, eta_f=1e-3,
        q_f=1.0, source_centers=[(2.0, 2.0)], source_radius=0.3, source_mode="rate",
    )
    coeffs = homogeneous_coefficients(square_mesh, permeability=1e-3)
    phi = initial_phasefield(
        square_mesh, [FractureSpec(center=(2.0, 2.0), half_length=0.6, half_thickness=0.3)]
    )
    n = square_mesh.n_vertices
    zeros_u = np.zeros((n, 2))
    dt = 0.5
    P, _ = solve_pressure(
        square_mesh, flow, coeffs, np.zeros(n), zeros_u, zeros_u, np.zeros(n), phi, np.zeros(n), dt, 0.1
    )

    cv = cell_values(square_mesh)
    _, chi_f = chi_indicators(cv.scalar(phi), flow.c_x)
    dofmap = DofMap(square_mesh, 1)
    M, _ = assemble(square_mesh, dofmap, mass_kernel(1.0 / dt))
    K, b = assemble(square_mesh, dofmap, laplace_kernel(1.0, source=fracture_source(cv, flow, 0.1, chi_f)))
    expected = direct_solve((M + K).tocsr(), b)
    np.testing.assert_allclose(P, expected, rtol=1e-9, atol=1e-12)

    rock = np.flatnonzero(np.all(np.isclose(square_mesh.vertices, (2.0, 2.75)), axis=1))
    assert phi[rock] == pytest.approx(1.0)
    assert P[rock] > 0.0


def test_hydrostatic_pressure_is_steady(square_mesh, monkeypatch):
    monkeypatch.setattr(settings, "pressure_linear_solver", "direct")
    flow = FlowParams(alpha=0.0, biot_modulus=1.0, k_r=1e-3, eta_r=1e-3, rho_r=2.0, gravity=(0.5, -3.0))
    coeffs = homogeneous_coefficients(square_mesh, permeability=1e-3)
    n = square_mesh.n_vertices
    x, y = square_mesh.vertices.T
    p_n = 2.0 * (0.5 * x - 3.0 * y) + 7.0
    u = np.zeros((n, 2))
    P, _ = solve_pressure(square_mesh, flow, coeffs, p_n, u, u, p_n, np.ones(n), np.zeros(n), 0.1, 0.1)
    np.testing.assert_allclose(P, p_n, rtol=1e-9, atol=1e-9)


def test_gravity_matches_one_dimensional_solution(square_mesh, monkeypatch):
    monkeypatch.setattr(settings, "pressure_linear_solver", "direct")
    flow = FlowParams(alpha=0.0, biot_modulus=1.0, c_f=1.0, k_r=1.0, eta_r=1.0, gravity=(0.0, -2.0))
    coeffs = homogeneous_coefficients(square_mesh, permeability=1.0)
    n = square_mesh.n_vertices
    u = np.zeros((n, 2))
    P, _ = solve_pressure(square_mesh, flow, coeffs, np.zeros(n), u, u, np.zeros(n),
                          np.ones(n), np.zeros(n), 0.5, 0.1)

    # problema 1D en y: (2 M + K) p = b con flujo de gravedad en los extremos
    cells = 16
    h = 4.0 / cells
    main = np.full(cells + 1, 2.0)
    main[[0, -1]] = 1.0
    off = np.ones(cells)
    M1 = h / 6.0 * (np.diag(2.0 * main) + np.diag(off, 1) + np.diag(off, -1))
    K1 = (np.diag(main) - np.diag(off, 1) - np.diag(off, -1)) / h
    b = np.zeros(cells + 1)
    b[0], b[-1] = 2.0, -2.0
    p1 = np.linalg.solve(2.0 * M1 + K1, b)

    rows = np.rint(square_mesh.vertices[:, 1] / h).astype(int)
    np.testing.assert_allclose(P, p1[rows], rtol=1e-9, atol=1e-12)
    assert P[rows == 0].min() > P[rows == cells].max()
