"""
MTL-FNO CLI Initialization Module.

This module initializes the PylizApp framework and configures the root
logger for the ``mtlfno`` project, before launching the Typer CLI app.
"""

import logging
import os
from datetime import datetime

from dotenv import load_dotenv
from pylizlib.core.app.pylizapp import PylizApp, PylizDirFoldersTemplate

from mtlfno import mtlfno_app

# Initialize PylizApp
app = PylizApp("mtlfno")
app.add_template_folder(PylizDirFoldersTemplate.LOGS)

# Setup Logger
log_folder = app.get_folder_template_path(PylizDirFoldersTemplate.LOGS)
timestamp = datetime.now().strftime("%Y_%m_%d_%H_%M_%S")
log_path = os.path.join(log_folder, f"mtlfno{timestamp}.log")

file_handler = logging.FileHandler(log_path)
file_handler.setLevel(logging.INFO)
file_handler.setFormatter(
    logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
)

# Configure Root Logger; console output is left to rich and tqdm
root_logger = logging.getLogger()
root_logger.setLevel(logging.INFO)
if root_logger.hasHandlers():
    root_logger.handlers.clear()
root_logger.addHandler(file_handler)

logger = logging.getLogger("mtlfno")


def main():
    """
    Execute the main MTL-FNO CLI application.

    Loads a project-local ``.env`` first so ``MTLFNO_*`` variables can feed
    the command options, then triggers the ``mtlfno_app`` Typer instance.
    """
    load_dotenv()
    logger.info(f"Starting mtlfno, logging to {log_path}")
    mtlfno_app()


if __name__ == "__main__":
    main()
