from typing import Any, Optional


class SimulationError(Exception):
    """Error base del simulador."""


class ConfigurationError(SimulationError):
    """Parámetros o escenario inválidos."""


class AssemblyError(SimulationError):
    """Fallo en el ensamblaje de elementos finitos (p. ej. celda degenerada)."""


class InterfaceError(SimulationError):
    """No existe frontera de fractura sobre la que imponer la interfaz."""


class SolverNotConverged(SimulationError):
    """Un solver iterativo agotó sus iteraciones."""

    def __init__(self, message: str, best_iterate: Any = None, iterations: int = 0):
        super().__init__(message)
        self.best_iterate = best_iterate
        self.iterations = iterations


class NewtonNotConverged(SolverNotConverged):
    """El Newton semisuave no convergió; guarda el último estado."""

    def __init__(self, message: str, state: Any = None, iterations: int = 0, diagnostics: Optional[dict] = None):
        super().__init__(message, best_iterate=state, iterations=iterations)
        self.state = state
        self.diagnostics = diagnostics or {}


class FixedStressNotConverged(SolverNotConverged):
    """El acoplamiento fixed-stress no alcanzó la tolerancia (o divergió)."""

    def __init__(self, message: str, report: Any = None, iterations: int = 0):
        super().__init__(message, best_iterate=None, iterations=iterations)
        self.report = report
