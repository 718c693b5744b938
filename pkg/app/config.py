from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Application
    debug: bool = False
    log_level: str = "INFO"
    log_json: bool = True
    output_dir: str = "output"
    matrix_export_dir: str = "output/matrices"

    # Solvers lineales
    gmres_restart: int = 30
    linear_max_iter: int = 1000
    linear_rtol: float = 1e-10
    ssor_omega: float = 1.2
    dense_lu_max_dofs: int = 2000
    direct_fallback: bool = True
    pressure_linear_solver: Literal["amg", "gmres", "direct"] = "amg"
    mechanics_linear_solver: Literal["gmres", "direct"] = "gmres"

    # Newton semisuave / conjunto activo
    newton_rtol: float = 1e-8
    newton_atol: float = 1e-12
    newton_step_tol: float = 1e-10
    max_newton: int = 50
    line_search_trials: int = 10
    complementarity_factor: float = 100.0

    # Refinamiento predictor-corrector
    c_ref: float = 0.8
    pc_max_rounds: int = 3

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="PFF_",
        case_sensitive=False,
        extra="ignore"
    )


settings = Settings()
