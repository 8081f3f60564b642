"""
MTL-FNO: multi-task Fourier neural operators for sparse-sensor field reconstruction.

This module initializes the main Typer application for the ``mtlfno`` CLI
and provides the root command callback. Subcommands register themselves
from their own modules, imported at the bottom.
"""

import typer

mtlfno_app = typer.Typer(
    help="Multi-task Fourier neural operator: generate data, train, evaluate, inspect and sweep.",
    no_args_is_help=True,
)


@mtlfno_app.callback()
def callback():
    """
    Multi-task Fourier neural operator toolkit.

    This callback serves as the root command for the CLI. It provides the
    top-level help text and groups the gen, train, eval, inspect and sweep
    subcommands.
    """
    pass


from . import diagnose, evaluate, gen, sweep, train
