import logging
import sys
import time
from contextlib import contextmanager
from typing import Iterator

import structlog

from app.config import settings

logger = structlog.get_logger()


def configure_logging(level: str | None = None, json_output: bool | None = None) -> None:
    """Configura structlog sobre el logging estándar."""
    level_name = (level or settings.log_level).upper()
    json_output = settings.log_json if json_output is None else json_output

    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=level_name, force=True)

    renderer = (
        structlog.processors.JSONRenderer()
        if json_output
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


@contextmanager
def log_stage(stage: str, **context) -> Iterator[dict]:
    """
    Registra inicio, fin y duración de una etapa del cálculo.

    El diccionario devuelto puede completarse dentro del bloque; su
    contenido se añade al evento ``stage_completed``.
    """
    start_time = time.time()
    extra: dict = {}
    logger.debug("stage_started", stage=stage, **context)
    try:
        yield extra
    except Exception as e:
        process_time = time.time() - start_time
        logger.error(
            "stage_failed",
            stage=stage,
            error=str(e),
            process_time=round(process_time, 4),
            **context
        )
        raise
    process_time = time.time() - start_time
    logger.info(
        "stage_completed",
        stage=stage,
        process_time=round(process_time, 4),
        **context,
        **extra
    )
