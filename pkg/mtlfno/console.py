"""
Shared console helpers for the CLI commands.

``handle_errors`` maps the ``mtlfno`` exception hierarchy onto the stable
exit codes: 2 for configuration, dataset, checkpoint and shape problems,
3 for numeric failures.
"""

import logging
from contextlib import contextmanager
from typing import Iterator

import typer

from mtlfno.core.errors import MtlFnoError, NumericError, SingularityError

logger = logging.getLogger(__name__)

EXIT_USAGE = 2
EXIT_NUMERIC = 3


@contextmanager
def handle_errors() -> Iterator[None]:
    try:
        yield
    except (NumericError, SingularityError) as exc:
        logger.error(f"Numeric failure: {exc}")
        typer.echo(f"❌ Numeric failure: {exc}", err=True)
        raise typer.Exit(code=EXIT_NUMERIC)
    except MtlFnoError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        typer.echo(f"❌ Error: {exc}", err=True)
        raise typer.Exit(code=EXIT_USAGE)
