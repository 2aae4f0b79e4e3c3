import logging
import os

from common.constants import LOG_DIRECTORY, LOGGER_NAME


def setup_logger(session_id: str, log_dir: str = LOG_DIRECTORY) -> logging.Logger:
    """
    Setup and configure the Steady logger for a session.

    Args:
        session_id: Unique session identifier, used as the log file name
        log_dir: Directory that receives <session_id>.log

    Returns:
        Configured Logger instance
    """
    os.makedirs(log_dir, exist_ok=True)

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(logging.INFO)

    # Repeated runs in one process must not stack handlers
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers.clear()

    fh = logging.FileHandler(os.path.join(log_dir, f"{session_id}.log"), encoding='utf-8')
    fh.setFormatter(logging.Formatter('%(asctime)s %(levelname)s: %(message)s'))

    logger.addHandler(fh)
    return logger


def close_logger() -> None:
    """Detach and close the session file handler."""
    logger = logging.getLogger(LOGGER_NAME)
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)
