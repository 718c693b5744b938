import math
import os
import re
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from dotenv import dotenv_values
from pydantic import ValidationError

from app.errors import ConfigurationError
from app.models.mesh import QuadMesh
from app.models.state import CellCoefficients, FieldState
from app.schemas.parameters import DARCY, ElasticParams, FlowParams, WidthParams, lame_parameters
from app.schemas.report import CodSample
from app.schemas.scenario import (
    CouplingConfig,
    FractureSpec,
    HeterogeneitySpec,
    MaterialSpec,
    MeshSpec,
    OutputSpec,
    RefineBox,
    ScenarioConfig,
)
from app.services.fem import evaluate_at_points

logger = structlog.get_logger()

SCENARIOS = ("example1", "example3", "example4", "custom")


# --------------------------------------------------------------------------
# Campo de fase inicial y parámetros dependientes de la malla
# --------------------------------------------------------------------------

def initial_phasefield(mesh: QuadMesh, fractures: Sequence[FractureSpec]) -> np.ndarray:
    """
    Phi^0 nodal: 0 en los nodos estrictamente dentro de alguna franja de fractura, 1 fuera.

    La semianchura por defecto de cada franja es h_min de la malla.

    Raises:
        ConfigurationError: si una franja no contiene ningún nodo
    """
    phi = np.ones(mesh.n_vertices)
    # nodos sobre el borde de la franja quedan fuera
    tol = 1e-9 * mesh.h_min
    for fracture in fractures:
        half_thickness = fracture.half_thickness or mesh.h_min
        dx, dy = fracture.direction
        rel = mesh.vertices - np.asarray(fracture.center, dtype=float)
        along = rel[:, 0] * dx + rel[:, 1] * dy
        across = -rel[:, 0] * dy + rel[:, 1] * dx
        inside = (np.abs(along) < fracture.half_length - tol) & (np.abs(across) < half_thickness - tol)
        if not inside.any():
            raise ConfigurationError(
                f"fracture at {fracture.center} is thinner than the local mesh (no interior nodes)"
            )
        phi[inside] = 0.0
    return phi


def resolve_elastic_params(config: ScenarioConfig, mesh: QuadMesh, epsilon: Optional[float] = None) -> ElasticParams:
    """epsilon explícito o epsilon_factor * h_min; kappa = kappa_factor * h_min de la malla actual."""
    if epsilon is None:
        epsilon = config.mesh.epsilon or config.mesh.epsilon_factor * mesh.h_min
    return ElasticParams(
        youngs_modulus=config.material.youngs_modulus,
        poisson_ratio=config.material.poisson_ratio,
        g_c=config.material.g_c,
        epsilon=epsilon,
        kappa=config.mesh.kappa_factor * mesh.h_min,
        alpha=config.flow.alpha,
    )


# --------------------------------------------------------------------------
# Heterogeneidades
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockField:
    """Campo constante a trozos sobre bloques cuadrados del dominio."""

    domain: Tuple[float, float, float, float]
    block_size: float
    values: np.ndarray  # (n_blocks_y, n_blocks_x)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        x0, _, y0, _ = self.domain
        ny, nx = self.values.shape
        ix = np.clip(np.floor((pts[:, 0] - x0) / self.block_size).astype(int), 0, nx - 1)
        iy = np.clip(np.floor((pts[:, 1] - y0) / self.block_size).astype(int), 0, ny - 1)
        return self.values[iy, ix]


def heterogeneous_fields(
    seed: int,
    domain: Tuple[float, float, float, float],
    block_size: float,
    e_range: Tuple[float, float],
    k_range: Tuple[float, float],
    epsilon: float
) -> Tuple[BlockField, BlockField]:
    """
    Campos sintéticos (E, K_R) uniformes i.i.d. por bloque, deterministas en la semilla.

    Raises:
        ConfigurationError: si el bloque no es mayor que epsilon
    """
    if block_size <= epsilon:
        raise ConfigurationError(
            f"heterogeneity block size {block_size} must exceed epsilon {epsilon}"
        )
    x0, x1, y0, y1 = domain
    nx = max(1, math.ceil((x1 - x0) / block_size - 1e-12))
    ny = max(1, math.ceil((y1 - y0) / block_size - 1e-12))
    rng = np.random.default_rng(seed)
    e_values = rng.uniform(e_range[0], e_range[1], size=(ny, nx))
    k_values = rng.uniform(k_range[0], k_range[1], size=(ny, nx))
    return BlockField(domain, block_size, e_values), BlockField(domain, block_size, k_values)


def cell_coefficients(
    mesh: QuadMesh,
    config: ScenarioConfig,
    fields: Optional[Tuple[BlockField, BlockField]] = None
) -> CellCoefficients:
    """Coeficientes por celda; con campos heterogéneos se muestrean en el centro de cada celda."""
    n = mesh.n_cells
    if fields is None:
        youngs = np.full(n, config.material.youngs_modulus)
        permeability = np.full(n, config.flow.k_r)
    else:
        e_field, k_field = fields
        centers = mesh.cell_centers
        youngs = e_field.evaluate(centers)
        permeability = k_field.evaluate(centers) * DARCY
    lam, shear = lame_parameters(youngs, config.material.poisson_ratio)
    return CellCoefficients(
        youngs_modulus=youngs,
        lame_lambda=np.asarray(lam, dtype=float),
        shear_modulus=np.asarray(shear, dtype=float),
        permeability=permeability,
    )


# --------------------------------------------------------------------------
# Solución de Sneddon y magnitudes de interés
# --------------------------------------------------------------------------

def sneddon_cod_analytic(x, pressure: float, half_length: float, youngs_modulus: float,
                         poisson_ratio: float, center: float = 0.0):
    """COD(x) = 4 p l0 (1 - nu^2) / E * sqrt(1 - (x - x_c)^2 / l0^2); cero fuera de la grieta."""
    xi = (np.asarray(x, dtype=float) - center) / half_length
    shape = np.sqrt(np.clip(1.0 - xi * xi, 0.0, None))
    cod = 4.0 * pressure * half_length * (1.0 - poisson_ratio ** 2) / youngs_modulus * shape
    return float(cod) if np.ndim(cod) == 0 else cod


def sneddon_tcv_analytic(pressure: float, half_length: float, youngs_modulus: float, poisson_ratio: float) -> float:
    """Volumen total de la grieta de Sneddon: 2 pi (1 - nu^2) l0^2 p / E."""
    return 2.0 * math.pi * (1.0 - poisson_ratio ** 2) * half_length ** 2 * pressure / youngs_modulus


def cod_profile(state: FieldState, x0: float) -> float:
    """
    COD(x0) = integral de u . grad(phi) sobre la vertical x = x0.

    Regla del punto medio compuesta con paso h_min/2.
    """
    mesh = state.mesh
    bx0, bx1, y0, y1 = mesh.bounds
    if not bx0 <= x0 <= bx1:
        raise ConfigurationError(f"COD line x = {x0} outside the domain")
    n = max(1, math.ceil((y1 - y0) / (0.5 * mesh.h_min)))
    dy = (y1 - y0) / n
    ys = y0 + (np.arange(n) + 0.5) * dy
    points = np.column_stack([np.full(n, float(x0)), ys])
    cells = mesh.locate(points)
    u, _ = evaluate_at_points(mesh, state.displacement, points, cells=cells)
    _, grad_phi = evaluate_at_points(mesh, state.phasefield, points, cells=cells)
    return float(np.sum(np.einsum("pd,pd->p", u, grad_phi)) * dy)


def _axis_samples(mesh: QuadMesh, fracture: FractureSpec) -> Tuple[np.ndarray, np.ndarray, float]:
    # Puntos medios de la cuerda del eje de la fractura dentro del dominio
    x0, x1, y0, y1 = mesh.bounds
    cx, cy = fracture.center
    dx, dy = fracture.direction
    lo, hi = -np.inf, np.inf
    for c, d, a, b in ((cx, dx, x0, x1), (cy, dy, y0, y1)):
        if abs(d) > 1e-14:
            t0, t1 = sorted(((a - c) / d, (b - c) / d))
            lo, hi = max(lo, t0), min(hi, t1)
    step_target = 0.5 * mesh.h_min
    n = max(1, math.ceil((hi - lo) / step_target))
    step = (hi - lo) / n
    s = lo + (np.arange(n) + 0.5) * step
    points = np.column_stack([cx + s * dx, cy + s * dy])
    return s, points, step


def half_crack_length(state: FieldState, fracture: FractureSpec, c_ls: float) -> float:
    """
    Mitad de la extensión del tramo conexo {phi < C_LS} a lo largo del eje de la fractura.

    Se toma el tramo más cercano al centro inicial; 0 si ningún punto está por debajo del umbral.
    """
    s, points, step = _axis_samples(state.mesh, fracture)
    phi, _ = evaluate_at_points(state.mesh, state.phasefield, points)
    below = phi < c_ls
    if not below.any():
        return 0.0
    # Tramos consecutivos por debajo del umbral
    edges = np.diff(np.concatenate([[0], below.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    distance = [
        0.0 if s[a] <= 0.0 <= s[b - 1] else min(abs(s[a]), abs(s[b - 1]))
        for a, b in zip(starts, stops)
    ]
    k = int(np.argmin(distance))
    return 0.5 * (stops[k] - starts[k]) * step


def min_pressure_along_axis(state: FieldState, fracture: FractureSpec) -> float:
    """Presión mínima muestreada sobre el eje de la fractura (presiones negativas en las puntas)."""
    _, points, _ = _axis_samples(state.mesh, fracture)
    pressure, _ = evaluate_at_points(state.mesh, state.pressure, points)
    return float(pressure.min())


def cod_samples(state: FieldState, fracture: FractureSpec, material: MaterialSpec, n: int = 21) -> List[CodSample]:
    """Perfil de COD a lo largo de la grieta inicial junto a la referencia de Sneddon a presión máxima."""
    cx = fracture.center[0]
    l0 = fracture.half_length
    xs = np.linspace(cx - l0, cx + l0, n)
    p_max = float(state.pressure.max())
    analytic = sneddon_cod_analytic(xs, p_max, l0, material.youngs_modulus, material.poisson_ratio, center=cx)
    return [
        CodSample(x=float(x), cod=cod_profile(state, float(x)), analytic_cod=float(a))
        for x, a in zip(xs, analytic)
    ]


# --------------------------------------------------------------------------
# Escenarios predefinidos
# --------------------------------------------------------------------------

# Presión de Sneddon que debe alcanzarse al final del ensayo cuasi-estacionario
SNEDDON_PRESSURE = 1e-3
# Cociente entre los caudales de inyección con alpha = 1 y alpha = 0
POROELASTIC_RATE_FACTOR = 1e7


def example1(alpha: float = 0.0, local_levels: int = 3, levelset_mode: str = "shift") -> ScenarioConfig:
    """
    Grieta de Sneddon presurizada por inyección (cuasi-estacionario, 10 pasos de 1 s).

    Con alpha = 0, contorno sin flujo y 1/M = c_F el balance de masa da
    P(T) |Omega| / M = q_F T, así que el caudal se elige para llegar a
    SNEDDON_PRESSURE en T = 10 s. Con alpha = 1 el caudal se multiplica por
    POROELASTIC_RATE_FACTOR.
    """
    domain = (0.0, 4.0, 0.0, 4.0)
    biot_modulus = 1e12
    end_time = 10.0
    area = (domain[1] - domain[0]) * (domain[3] - domain[2])
    rate = SNEDDON_PRESSURE * area / biot_modulus / end_time
    if alpha > 0:
        rate *= POROELASTIC_RATE_FACTOR
    return ScenarioConfig(
        name="example1",
        domain=domain,
        fractures=[FractureSpec(center=(2.0, 2.0), half_length=0.2)],
        mesh=MeshSpec(
            n_uniform=5,
            boxes=[RefineBox(box=(1.6, 2.4, 1.75, 2.25), levels=local_levels)],
            epsilon=0.045,
            kappa_factor=1e-10,
        ),
        material=MaterialSpec(youngs_modulus=1.0, poisson_ratio=0.2, g_c=1.0),
        flow=FlowParams(
            alpha=alpha,
            biot_modulus=biot_modulus,
            c_f=1.0 / biot_modulus,
            k_r=1.0 * DARCY,
            q_f=rate,
            source_mode="rate",
            source_centers=[(2.0, 2.0)],
        ),
        width=WidthParams(mode=levelset_mode),
        coupling=CouplingConfig(dt=1.0, end_time=end_time, relative_increments=False),
    )


def example3(
    tip_pressure: bool = False,
    n_uniform: int = 5,
    local_levels: int = 2,
    levelset_mode: str = "shift"
) -> ScenarioConfig:
    """Grieta que se propaga por inyección en un medio poroso (alpha = 1)."""
    return ScenarioConfig(
        name="example3",
        domain=(0.0, 4.0, 0.0, 4.0),
        fractures=[FractureSpec(center=(2.0, 2.0), half_length=0.2)],
        mesh=MeshSpec(
            n_uniform=n_uniform,
            boxes=[RefineBox(box=(1.6, 2.4, 1.8, 2.2), levels=local_levels)],
            epsilon_factor=2.0,
            kappa_factor=1e-10,
        ),
        material=MaterialSpec(youngs_modulus=1e8, poisson_ratio=0.2, g_c=1.0),
        flow=FlowParams(
            alpha=1.0,
            biot_modulus=1e8,
            c_f=1e-8,
            k_r=1.0 * DARCY,
            q_f=2.0,
            source_centers=[(2.0, 2.0)],
        ),
        width=WidthParams(mode=levelset_mode),
        coupling=CouplingConfig(dt=0.01, end_time=0.6),
        output=OutputSpec(tip_pressure=tip_pressure),
    )


EXAMPLE4_FRACTURES = (
    FractureSpec(center=(4.0, 4.5), half_length=0.5, angle_deg=30.0),
    FractureSpec(center=(6.0, 4.5), half_length=0.5, angle_deg=-30.0),
    FractureSpec(center=(5.0, 6.5), half_length=0.5, angle_deg=0.0),
)


def example4(seed: int = 0, heterogeneity: str = "none", levelset_mode: str = "shift") -> ScenarioConfig:
    """
    Red de tres fracturas en medio homogéneo ("none"), con E heterogéneo ("lame")
    o con E y K_R heterogéneos ("full").
    """
    if heterogeneity not in ("none", "lame", "full"):
        raise ConfigurationError(f"unknown heterogeneity case {heterogeneity!r}")
    boxes = []
    for fracture in EXAMPLE4_FRACTURES:
        (ax, ay), (bx, by) = fracture.tips
        margin = 0.3
        boxes.append(RefineBox(
            box=(min(ax, bx) - margin, max(ax, bx) + margin, min(ay, by) - margin, max(ay, by) + margin),
            levels=2,
        ))
    return ScenarioConfig(
        name="example4",
        domain=(0.0, 10.0, 0.0, 10.0),
        fractures=list(EXAMPLE4_FRACTURES),
        mesh=MeshSpec(n_uniform=5, boxes=boxes, epsilon_factor=2.0, kappa_factor=1e-10),
        material=MaterialSpec(youngs_modulus=1e8, poisson_ratio=0.2, g_c=1.0),
        flow=FlowParams(
            alpha=1.0,
            biot_modulus=1e8,
            c_f=1e-8,
            k_r=1.0 * DARCY,
            q_f=5.0,
            source_centers=[f.center for f in EXAMPLE4_FRACTURES],
        ),
        width=WidthParams(mode=levelset_mode),
        coupling=CouplingConfig(
            dt=0.01,
            end_time=0.3,
            tol_pressure=1e-4,
            tol_displacement=1e-4,
            tol_phasefield=1e-2,
        ),
        heterogeneity=HeterogeneitySpec(
            enabled=heterogeneity != "none",
            seed=seed,
            block_size=0.5,
            e_range=(1e7, 1e8),
            k_range_darcy=(0.1, 1.0) if heterogeneity == "full" else (1.0, 1.0),
        ),
        seed=seed,
    )


# --------------------------------------------------------------------------
# Ficheros de escenario (clave = valor)
# --------------------------------------------------------------------------

# clave plana -> (sección, campo)
_FLAT_KEYS: Dict[str, Tuple[Optional[str], str]] = {
    "name": (None, "name"),
    "seed": (None, "seed"),
    "n_uniform": ("mesh", "n_uniform"),
    "epsilon": ("mesh", "epsilon"),
    "epsilon_factor": ("mesh", "epsilon_factor"),
    "kappa_factor": ("mesh", "kappa_factor"),
    "youngs_modulus": ("material", "youngs_modulus"),
    "poisson_ratio": ("material", "poisson_ratio"),
    "g_c": ("material", "g_c"),
    "alpha": ("flow", "alpha"),
    "biot_modulus": ("flow", "biot_modulus"),
    "c_f": ("flow", "c_f"),
    "eta_r": ("flow", "eta_r"),
    "eta_f": ("flow", "eta_f"),
    "rho_r": ("flow", "rho_r"),
    "rho_f": ("flow", "rho_f"),
    "q_r": ("flow", "q_r"),
    "q_f": ("flow", "q_f"),
    "c_x": ("flow", "c_x"),
    "source_radius": ("flow", "source_radius"),
    "source_mode": ("flow", "source_mode"),
    "fixed_stress_denominator": ("flow", "fixed_stress_denominator"),
    "c_ls": ("width", "c_ls"),
    "theta": ("width", "theta"),
    "beta": ("width", "beta"),
    "f1": ("width", "f1"),
    "f2": ("width", "f2"),
    "levelset_mode": ("width", "mode"),
    "tol_pressure": ("coupling", "tol_pressure"),
    "tol_displacement": ("coupling", "tol_displacement"),
    "tol_phasefield": ("coupling", "tol_phasefield"),
    "max_fs_iters": ("coupling", "max_fs_iters"),
    "dt": ("coupling", "dt"),
    "end_time": ("coupling", "end_time"),
    "pc_max_rounds": ("coupling", "pc_max_rounds"),
    "c_ref": ("coupling", "c_ref"),
    "relative_increments": ("coupling", "relative_increments"),
    "extrapolation": ("coupling", "extrapolation"),
    "divergence_guard": ("coupling", "divergence_guard"),
    "heterogeneous": ("heterogeneity", "enabled"),
    "heterogeneity_seed": ("heterogeneity", "seed"),
    "block_size": ("heterogeneity", "block_size"),
    "output_dir": ("output", "directory"),
    "vtk_stride": ("output", "vtk_stride"),
    "tip_pressure": ("output", "tip_pressure"),
}

_INDEXED = re.compile(r"^(fracture|refine_box)_(\d+)$")


def _floats(raw: str, key: str, sizes: Sequence[int]) -> List[float]:
    try:
        values = [float(v) for v in raw.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"{key}: expected comma-separated numbers, got {raw!r}")
    if len(values) not in sizes:
        raise ConfigurationError(f"{key}: expected {' or '.join(map(str, sizes))} values, got {len(values)}")
    return values


def _scenario_dict(entries: Dict[str, Optional[str]]) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "mesh": {}, "material": {}, "flow": {}, "width": {},
        "coupling": {}, "heterogeneity": {}, "output": {},
    }
    fractures: Dict[int, dict] = {}
    boxes: Dict[int, dict] = {}
    e_range: List[Optional[str]] = [None, None]
    k_range: List[Optional[str]] = [None, None]

    for raw_key, value in entries.items():
        key = raw_key.strip().lower()
        if value is None or value.strip() == "":
            raise ConfigurationError(f"{key}: missing value")
        value = value.strip()
        indexed = _INDEXED.match(key)
        if indexed:
            kind, idx = indexed.group(1), int(indexed.group(2))
            if kind == "fracture":
                v = _floats(value, key, (4, 5))
                fractures[idx] = {"center": (v[0], v[1]), "half_length": v[2], "angle_deg": v[3]}
                if len(v) == 5:
                    fractures[idx]["half_thickness"] = v[4]
            else:
                v = _floats(value, key, (5,))
                if v[4] != int(v[4]):
                    raise ConfigurationError(f"{key}: refinement levels must be an integer")
                boxes[idx] = {"box": tuple(v[:4]), "levels": int(v[4])}
        elif key == "domain":
            data["domain"] = tuple(_floats(value, key, (4,)))
        elif key == "source_centers":
            v = _floats(value, key, tuple(range(2, 200, 2)))
            data["flow"]["source_centers"] = [(v[i], v[i + 1]) for i in range(0, len(v), 2)]
        elif key == "gravity":
            data["flow"]["gravity"] = tuple(_floats(value, key, (2,)))
        elif key == "k_r_darcy":
            data["flow"]["k_r"] = float(_floats(value, key, (1,))[0]) * DARCY
        elif key == "tol_fs":
            # las tolerancias por campo tienen prioridad sobre tol_fs
            for field in ("tol_pressure", "tol_displacement", "tol_phasefield"):
                data["coupling"].setdefault(field, value)
        elif key in ("e_min", "e_max"):
            e_range[key == "e_max"] = value
        elif key in ("k_min_darcy", "k_max_darcy"):
            k_range[key == "k_max_darcy"] = value
        elif key in _FLAT_KEYS:
            section, field = _FLAT_KEYS[key]
            target = data if section is None else data[section]
            target[field] = value
        else:
            raise ConfigurationError(f"unknown scenario key {raw_key!r}")

    if any(v is not None for v in e_range):
        if None in e_range:
            raise ConfigurationError("e_min and e_max must be given together")
        data["heterogeneity"]["e_range"] = tuple(e_range)
    if any(v is not None for v in k_range):
        if None in k_range:
            raise ConfigurationError("k_min_darcy and k_max_darcy must be given together")
        data["heterogeneity"]["k_range_darcy"] = tuple(k_range)

    data["fractures"] = [fractures[k] for k in sorted(fractures)]
    data["mesh"]["boxes"] = [boxes[k] for k in sorted(boxes)]
    if data["flow"].get("q_f") and "source_centers" not in data["flow"]:
        data["flow"]["source_centers"] = [f["center"] for f in data["fractures"]]
    return data


def load_scenario_file(path: str) -> ScenarioConfig:
    """
    Lee un escenario en formato clave = valor (mismo formato que .env).

    Raises:
        ConfigurationError: fichero inexistente, clave desconocida o valor inválido
    """
    if not os.path.isfile(path):
        raise ConfigurationError(f"scenario file not found: {path}")
    entries = dotenv_values(path)
    if not entries:
        raise ConfigurationError(f"scenario file is empty: {path}")
    try:
        config = ScenarioConfig.model_validate(_scenario_dict(entries))
    except ValidationError as e:
        raise ConfigurationError(f"invalid scenario file {path}: {e}") from e
    logger.info("Scenario file loaded", path=path, name=config.name, fractures=len(config.fractures))
    return config


def _override(config: ScenarioConfig, section: Optional[str], **values) -> ScenarioConfig:
    data = config.model_dump()
    target = data if section is None else data[section]
    target.update(values)
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(str(e)) from e


def build_scenario(
    name: str,
    config_path: Optional[str] = None,
    alpha: Optional[float] = None,
    seed: Optional[int] = None,
    levelset_mode: Optional[str] = None,
    local_levels: Optional[int] = None,
    dt: Optional[float] = None,
    end_time: Optional[float] = None,
    tip_pressure: bool = False,
    output_dir: Optional[str] = None,
    vtk_stride: Optional[int] = None,
    heterogeneity: str = "none"
) -> ScenarioConfig:
    """
    Construye un escenario predefinido o leído de fichero y aplica las opciones de línea de comandos.

    Raises:
        ConfigurationError: escenario desconocido, fichero ausente u opción inválida
    """
    mode = levelset_mode or "shift"
    if config_path is not None:
        config = load_scenario_file(config_path)
        if levelset_mode:
            config = _override(config, "width", mode=levelset_mode)
        if alpha is not None:
            config = _override(config, "flow", alpha=alpha)
    elif name == "example1":
        config = example1(alpha=alpha or 0.0, local_levels=3 if local_levels is None else local_levels,
                          levelset_mode=mode)
    elif name == "example3":
        kwargs = {} if local_levels is None else {"local_levels": local_levels}
        config = example3(tip_pressure=tip_pressure, levelset_mode=mode, **kwargs)
    elif name == "example4":
        config = example4(seed=seed or 0, heterogeneity=heterogeneity, levelset_mode=mode)
    elif name == "custom":
        raise ConfigurationError("scenario 'custom' requires --config")
    else:
        raise ConfigurationError(f"unknown scenario {name!r}; choose one of {', '.join(SCENARIOS)}")

    if name not in ("example1", "custom") and alpha is not None and config_path is None:
        config = _override(config, "flow", alpha=alpha)
    if local_levels is not None and config_path is not None:
        boxes = [dict(b.model_dump(), levels=local_levels) for b in config.mesh.boxes]
        config = _override(config, "mesh", boxes=boxes)
    if seed is not None:
        config = _override(config, None, seed=seed)
        config = _override(config, "heterogeneity", seed=seed)
    coupling = {k: v for k, v in (("dt", dt), ("end_time", end_time)) if v is not None}
    if coupling:
        config = _override(config, "coupling", **coupling)
    output = {k: v for k, v in (("directory", output_dir), ("vtk_stride", vtk_stride)) if v is not None}
    if tip_pressure:
        output["tip_pressure"] = True
    if output:
        config = _override(config, "output", **output)
    return config
