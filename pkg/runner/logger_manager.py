"""
Logging setup for plateau-flow invocations.

A `run` logs into plateau_flow.log inside its output directory and to the
console; `verify` and `curves` log to the console only. numpy and scipy
RuntimeWarnings are routed into the same handlers.
"""

import logging
import os
from pathlib import Path

LOG_NAME = "plateau_flow.log"
LOG_FORMAT = "%(asctime)s | %(levelname)s | %(message)s"


def resolve_level(level=None) -> int:
    """Level name from the argument or PLATEAU_FLOW_LOG_LEVEL, INFO when unknown."""
    name = level or os.getenv("PLATEAU_FLOW_LOG_LEVEL", "INFO")
    return getattr(logging, str(name).upper(), logging.INFO)


class LoggerManager:
    def __init__(self, output_dir=None, level=None):
        handlers = [logging.StreamHandler()]
        self.log_path = None
        if output_dir is not None:
            self.log_path = Path(output_dir) / LOG_NAME
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            handlers.insert(0, logging.FileHandler(self.log_path))
        self.level = resolve_level(level)
        logging.basicConfig(level=self.level, format=LOG_FORMAT, handlers=handlers)
        logging.captureWarnings(True)
        self.logger = logging.getLogger()

    def log_run_header(self, source: str, threads=None) -> None:
        logging.info(f"plateau-flow run from {source} (threads={threads or 'default'}, log={self.log_path})")
