import argparse
import sys
from typing import List, Optional

import structlog

from app.config import settings
from app.errors import ConfigurationError, SimulationError, SolverNotConverged
from app.logging_setup import configure_logging
from app.services.fixed_stress import run_time_loop
from app.services.scenarios import SCENARIOS, build_scenario
from app.services.storage import OutputStorage

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pff",
        description="Fracturas de campo de fase rellenas de fluido en medios poroelásticos (2D)",
    )
    parser.add_argument("--scenario", choices=SCENARIOS, help="escenario predefinido")
    parser.add_argument("--config", help="fichero de escenario clave = valor")
    parser.add_argument("--alpha", type=float, help="coeficiente de Biot")
    parser.add_argument("--seed", type=int, help="semilla de las heterogeneidades")
    parser.add_argument("--out", help=f"directorio de salida (por defecto {settings.output_dir})")
    parser.add_argument("--vtk-stride", type=int, help="escribir VTK cada k pasos (0 desactiva)")
    parser.add_argument("--levelset-mode", choices=("shift", "poisson"))
    parser.add_argument("--local-levels", type=int, help="refinamientos locales iniciales")
    parser.add_argument("--dt", type=float, help="paso de tiempo (s)")
    parser.add_argument("--end-time", type=float, help="tiempo final (s)")
    parser.add_argument("--tip-pressure", action="store_true",
                        help="registrar la presión mínima sobre el eje de la fractura")
    parser.add_argument("--heterogeneity", choices=("none", "lame", "full"), default="none",
                        help="caso heterogéneo de example4")
    return parser


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Punto de entrada de la línea de comandos; devuelve el código de salida."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    logger = structlog.get_logger()
    if args.scenario is None and args.config is None:
        parser.print_usage(sys.stderr)
        logger.error("No scenario given", hint="use --scenario or --config")
        return EXIT_USAGE
    name = args.scenario or "custom"

    try:
        config = build_scenario(
            name,
            config_path=args.config,
            alpha=args.alpha,
            seed=args.seed,
            levelset_mode=args.levelset_mode,
            local_levels=args.local_levels,
            dt=args.dt,
            end_time=args.end_time,
            tip_pressure=args.tip_pressure,
            output_dir=args.out,
            vtk_stride=args.vtk_stride,
            heterogeneity=args.heterogeneity,
        )
        storage = OutputStorage(config.output.directory)
        series, state = run_time_loop(config, storage)
    except ConfigurationError as e:
        parser.print_usage(sys.stderr)
        logger.error("Invalid configuration", error=str(e))
        return EXIT_USAGE
    except SolverNotConverged as e:
        logger.error("Solver did not converge", error=str(e), iterations=e.iterations)
        return EXIT_SOLVER
    except SimulationError as e:
        logger.error("Simulation failed", error=str(e))
        return EXIT_SOLVER

    logger.info(
        "Run finished",
        scenario=config.name,
        steps=len(series.reports),
        final_time=state.time,
        max_pressure=max(series.max_pressures, default=0.0),
        output_dir=config.output.directory
    )
    return EXIT_OK


if __name__ == "__main__":
    configure_logging()
    sys.exit(run_cli())
