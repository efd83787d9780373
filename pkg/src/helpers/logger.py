import os
import logging
from datetime import datetime

from src.config import config

VALID_LEVELS = ("info", "error", "warning", "debug")


def setup_logger(folder: str, run_name: str) -> logging.Logger:
    """
    Sets up and returns a logger writing to a per-step, per-run daily file.

    Args:
        folder (str): Subfolder under LOG_DIR for the specific step.
        run_name (str): Name of the run (usually the input CSV file name).

    Returns:
        logging.Logger: Configured logger object.
    """
    base_log_dir = os.path.join(config.LOG_DIR, folder)
    os.makedirs(base_log_dir, exist_ok=True)

    # One log file per run per day
    base_name = os.path.splitext(os.path.basename(run_name))[0]
    current_date = datetime.now().strftime('%Y%m%d')
    log_filename = f"{base_name}_{current_date}.log"
    full_log_path = os.path.join(base_log_dir, log_filename)

    logger = logging.getLogger(full_log_path)
    logger.setLevel(logging.DEBUG)
    logger.propagate = False  # Prevent propagation to root logger

    # Avoid adding handlers multiple times if logger is reused
    if not logger.handlers:
        file_handler = logging.FileHandler(full_log_path)
        formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s')
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def log_message(folder: str, run_name: str, log_string: str, level: str = "info"):
    """
    Logs a message to the step's log file.

    Args:
        folder (str): Log subfolder.
        run_name (str): Run being processed.
        log_string (str): Message to log.
        level (str): Logging level ("info", "error", "warning", "debug").
    """
    if level.lower() not in VALID_LEVELS:
        raise ValueError(f"Invalid log level: {level}. Must be one of {list(VALID_LEVELS)}")

    try:
        logger = setup_logger(folder, run_name)
        getattr(logger, level.lower())(log_string)
    except (OSError, IOError) as e:
        print(f"ERROR: Failed to write to log file: {str(e)}")
        raise
