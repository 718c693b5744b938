from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
import structlog

from app.errors import FixedStressNotConverged, SolverNotConverged
from app.logging_setup import log_stage
from app.models.mesh import QuadMesh
from app.models.state import CellCoefficients, FieldState, MechState
from app.schemas.parameters import ElasticParams
from app.schemas.report import QoiSeries, TimeStepReport
from app.schemas.scenario import ScenarioConfig
from app.services.fem import l2_norm
from app.services.mechanics import active_set_newton_solve, extrapolate_phi, total_crack_volume
from app.services.mesh import (
    build_rect_mesh,
    predictor_corrector_flags,
    refine,
    transfer_field,
    update_material_ids,
)
from app.services.pressure import solve_pressure
from app.services.scenarios import (
    BlockField,
    cell_coefficients,
    cod_profile,
    cod_samples,
    half_crack_length,
    heterogeneous_fields,
    initial_phasefield,
    min_pressure_along_axis,
    resolve_elastic_params,
)
from app.services.storage import OutputStorage
from app.services.width import (
    interface_faces,
    interface_widths,
    levelset_poisson,
    levelset_shift,
    solve_width,
)

logger = structlog.get_logger()

# iteraciones consecutivas con incremento creciente toleradas
DIVERGENCE_WINDOW = 3


@dataclass(frozen=True)
class StepSetup:
    """Parámetros de un paso ligados a la malla actual."""

    elastic: ElasticParams
    coefficients: CellCoefficients
    config: ScenarioConfig


def levelset_and_width(
    mesh: QuadMesh,
    phi: np.ndarray,
    displacement: np.ndarray,
    config: ScenarioConfig
) -> Tuple[QuadMesh, np.ndarray, np.ndarray]:
    """
    Pasos de level-set y ancho de una iteración fixed-stress.

    Sin frontera de fractura se usa el level-set por desplazamiento y W = 0.

    Returns:
        (malla con material actualizado, Phi_LS, W)
    """
    params = config.width
    mesh = update_material_ids(mesh, phi, params.c_ls)
    interface = interface_faces(mesh)
    if len(interface) == 0:
        return mesh, levelset_shift(phi, params.c_ls), np.zeros(mesh.n_vertices)
    if params.mode == "poisson":
        levelset = levelset_poisson(mesh, phi, params)
    else:
        levelset = levelset_shift(phi, params.c_ls)
    w_d = interface_widths(mesh, interface, displacement, levelset)
    return mesh, levelset, solve_width(mesh, interface, w_d, params)


def _increment(mesh: QuadMesh, new: np.ndarray, old: np.ndarray, relative: bool) -> float:
    change = l2_norm(mesh, new - old)
    if not relative:
        return change
    size = l2_norm(mesh, new)
    return change / size if size > 0.0 else change


def fixed_stress_step(
    state_n: FieldState,
    setup: StepSetup,
    phi_nm1: Optional[np.ndarray] = None
) -> Tuple[FieldState, TimeStepReport]:
    """
    Un paso de tiempo del acoplamiento iterativo
    level-set -> ancho -> presión -> desplazamiento/campo de fase.

    Args:
        state_n: Estado convergido en t^n
        setup: Parámetros elásticos, coeficientes y escenario
        phi_nm1: Phi^{n-1} para la extrapolación E(phi); None usa Phi^n

    Returns:
        (estado en t^{n+1}, informe del paso)

    Raises:
        FixedStressNotConverged: se agotó max_fs_iters o los incrementos divergen
    """
    config = setup.config
    coupling = config.coupling
    dt = coupling.dt
    mesh = state_n.mesh
    tolerances = (coupling.tol_pressure, coupling.tol_displacement, coupling.tol_phasefield)
    e_phi = extrapolate_phi(state_n.phasefield, phi_nm1, coupling.extrapolation)

    p_l = state_n.pressure
    u_l = state_n.displacement
    phi_l = state_n.phasefield
    report = TimeStepReport(step=state_n.step + 1, time=state_n.time + dt)
    history: List[float] = []
    growths = 0

    for iteration in range(1, coupling.max_fs_iters + 1):
        mesh, levelset, width = levelset_and_width(mesh, phi_l, u_l, config)

        p_new, p_its = solve_pressure(
            mesh,
            config.flow,
            setup.coefficients,
            state_n.pressure,
            u_l,
            state_n.displacement,
            p_l,
            phi_l,
            width,
            dt,
            setup.elastic.epsilon,
        )
        initial = MechState(
            displacement=u_l,
            phasefield=phi_l,
            phasefield_prev=state_n.phasefield,
        )
        try:
            newton = active_set_newton_solve(
                mesh, initial, p_new, setup.elastic, setup.coefficients, e_phi, bound=state_n.phasefield
            )
        except SolverNotConverged as e:
            report.fs_iterations = iteration
            logger.error("Newton failed inside fixed-stress loop", error=str(e), iteration=iteration)
            raise

        increments = (
            _increment(mesh, p_new, p_l, coupling.relative_increments),
            _increment(mesh, newton.state.displacement, u_l, coupling.relative_increments),
            _increment(mesh, newton.state.phasefield, phi_l, coupling.relative_increments),
        )
        p_l, u_l, phi_l = p_new, newton.state.displacement, newton.state.phasefield

        report.fs_iterations = iteration
        report.newton_iterations_total += newton.iterations
        report.gmres_iterations_total += p_its + newton.gmres_iterations
        report.increments.append(increments)
        logger.info(
            "fixed_stress_iteration",
            step=report.step,
            iteration=iteration,
            increment_pressure=increments[0],
            increment_displacement=increments[1],
            increment_phasefield=increments[2],
            newton_iterations=newton.iterations,
            active_nodes=newton.active_nodes
        )

        if all(inc <= tol for inc, tol in zip(increments, tolerances)):
            break

        measure = max(inc / tol for inc, tol in zip(increments, tolerances))
        growths = growths + 1 if history and measure > history[-1] else 0
        history.append(measure)
        if coupling.divergence_guard and growths > DIVERGENCE_WINDOW:
            logger.error("Fixed-stress increments diverging", step=report.step, iteration=iteration)
            raise FixedStressNotConverged(
                f"fixed-stress increments grew {growths} times in a row at step {report.step}",
                report=report,
                iterations=iteration
            )
    else:
        logger.error("Fixed-stress did not converge", step=report.step, iterations=coupling.max_fs_iters)
        raise FixedStressNotConverged(
            f"fixed-stress did not converge in {coupling.max_fs_iters} iterations at step {report.step}",
            report=report,
            iterations=coupling.max_fs_iters
        )

    # Phi_LS y W coherentes con el campo de fase final
    mesh, levelset, width = levelset_and_width(mesh, phi_l, u_l, config)
    state = FieldState(
        mesh=mesh,
        pressure=p_l,
        displacement=u_l,
        phasefield=phi_l,
        levelset=levelset,
        width=width,
        time=report.time,
        step=report.step,
    )
    report.active_cells = mesh.n_cells
    report.max_pressure = float(p_l.max())
    report.max_width = float(width.max())
    return state, report


class FixedStressOrchestrator:
    """Orquestador del bucle temporal con refinamiento predictor-corrector."""

    def __init__(self, config: ScenarioConfig, storage: Optional[OutputStorage] = None):
        self.config = config
        self.storage = storage
        self.fields: Optional[Tuple[BlockField, BlockField]] = None

        boxes = [(b.box, b.levels) for b in config.mesh.boxes]
        mesh = build_rect_mesh(config.domain, config.mesh.n_uniform, boxes)
        # epsilon queda fijado por la malla inicial
        self.epsilon = config.mesh.epsilon or config.mesh.epsilon_factor * mesh.h_min
        if config.heterogeneity.enabled:
            h = config.heterogeneity
            self.fields = heterogeneous_fields(
                h.seed, config.domain, h.block_size, h.e_range, h.k_range_darcy, self.epsilon
            )
        phi0 = initial_phasefield(mesh, config.fractures)
        mesh = update_material_ids(mesh, phi0, config.width.c_ls)
        self.initial_state = FieldState.initial(mesh, phi0, config.width.c_ls)

    def setup_for(self, mesh: QuadMesh) -> StepSetup:
        return StepSetup(
            elastic=resolve_elastic_params(self.config, mesh, epsilon=self.epsilon),
            coefficients=cell_coefficients(mesh, self.config, self.fields),
            config=self.config,
        )

    def _transfer(self, state: FieldState, mesh: QuadMesh) -> FieldState:
        # La refinación no cambia la interpolación Q1: la transferencia es exacta
        return replace(
            state,
            mesh=mesh,
            pressure=transfer_field(state.mesh, mesh, state.pressure),
            displacement=transfer_field(state.mesh, mesh, state.displacement),
            phasefield=transfer_field(state.mesh, mesh, state.phasefield),
            levelset=transfer_field(state.mesh, mesh, state.levelset),
            width=transfer_field(state.mesh, mesh, state.width),
        )

    def advance(
        self,
        state_n: FieldState,
        phi_nm1: Optional[np.ndarray]
    ) -> Tuple[FieldState, TimeStepReport, Optional[np.ndarray]]:
        """
        Un paso con recomputación predictor-corrector.

        La historia (P^n, U^n, Phi^n, Phi^{n-1}) se reinterpola siempre desde la
        malla previa al paso, nunca desde la solución predictora rechazada.

        Returns:
            (estado nuevo, informe, Phi^n sobre la malla final)
        """
        coupling = self.config.coupling
        history_mesh = state_n.mesh
        start, phi_prev = state_n, phi_nm1
        accumulated = 0
        rounds = 0
        while True:
            setup = self.setup_for(start.mesh)
            extrapolation_history = phi_prev if state_n.step >= 2 else None
            try:
                state, report = fixed_stress_step(start, setup, extrapolation_history)
            except FixedStressNotConverged as e:
                if e.report is not None:
                    e.report.pc_rounds = rounds
                    e.report.fs_iterations_accumulated = accumulated + e.iterations
                raise
            accumulated += report.fs_iterations

            flags = predictor_corrector_flags(state.mesh, state.phasefield, self.epsilon, coupling.c_ref)
            if not flags.any() or rounds >= coupling.pc_max_rounds:
                break
            rounds += 1
            new_mesh = refine(state.mesh, flags)
            logger.info(
                "predictor_corrector_refinement",
                step=report.step,
                round=rounds,
                cells_before=state.mesh.n_cells,
                cells_after=new_mesh.n_cells
            )
            start = self._transfer(state_n, new_mesh)
            if phi_nm1 is not None:
                phi_prev = transfer_field(history_mesh, new_mesh, phi_nm1)

        report.pc_rounds = rounds
        report.fs_iterations_accumulated = accumulated
        return state, report, start.phasefield

    def quantities(self, state: FieldState, report: TimeStepReport) -> TimeStepReport:
        """Completa el informe con longitud de grieta, COD central, TCV y presión sobre el eje."""
        fractures = self.config.fractures
        if fractures:
            main = fractures[0]
            report.half_length = half_crack_length(state, main, self.config.width.c_ls)
            report.cod_center = cod_profile(state, main.center[0])
            if self.config.output.tip_pressure:
                report.min_pressure_axis = min_pressure_along_axis(state, main)
        report.total_crack_volume = total_crack_volume(state.mesh, state.displacement, state.phasefield)
        return report

    def run(self) -> Tuple[QoiSeries, FieldState]:
        """
        Bucle temporal completo.

        Returns:
            (serie de magnitudes de interés, estado final)

        Raises:
            SolverNotConverged: fallo de un paso; las salidas parciales quedan escritas
        """
        config = self.config
        series = QoiSeries()
        state = self.initial_state
        phi_nm1: Optional[np.ndarray] = None
        stride = config.output.vtk_stride

        if self.storage is not None and stride:
            self.storage.write_vtk(state, 0, self.setup_for(state.mesh).coefficients)

        with log_stage("time_loop", scenario=config.name, steps=config.coupling.n_steps) as summary:
            try:
                for _ in range(config.coupling.n_steps):
                    new_state, report, phi_n = self.advance(state, phi_nm1)
                    self.quantities(new_state, report)
                    series.reports.append(report)
                    logger.info(
                        "time_step_completed",
                        step=report.step,
                        time=report.time,
                        fs_iterations=report.fs_iterations,
                        newton_iterations=report.newton_iterations_total,
                        max_pressure=report.max_pressure,
                        half_length=report.half_length,
                        cells=report.active_cells
                    )
                    # Phi^n sobre la malla final del paso es la historia del siguiente
                    phi_nm1 = phi_n
                    state = new_state
                    if self.storage is not None and stride and report.step % stride == 0:
                        self.storage.write_vtk(state, report.step, self.setup_for(state.mesh).coefficients)
            finally:
                self._write_series(series, state)
            summary["steps_completed"] = len(series.reports)
        return series, state

    def _write_series(self, series: QoiSeries, state: FieldState) -> None:
        if self.config.fractures and series.reports:
            series.cod_profile = cod_samples(state, self.config.fractures[0], self.config.material)
        if self.storage is None:
            return
        self.storage.write_qoi(series, with_tip_pressure=self.config.output.tip_pressure)
        if series.cod_profile:
            self.storage.write_cod(series.cod_profile)


def run_time_loop(config: ScenarioConfig, storage: Optional[OutputStorage] = None) -> Tuple[QoiSeries, FieldState]:
    """Ejecuta el escenario completo; con T = 0 devuelve el estado inicial sin informes."""
    return FixedStressOrchestrator(config, storage).run()
