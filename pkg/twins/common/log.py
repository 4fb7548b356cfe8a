import logging
import sys

from twins.common.config import SETTINGS
from twins.common.otel import OtelLogging


class Log:
    """Utility class for unified logging configuration and output"""

    @staticmethod
    def init(level: str = None):
        """Initialize logging configuration"""
        level = (level or SETTINGS.LOG_LEVEL).upper()
        if SETTINGS.OTEL_ENABLED:
            OtelLogging.init()
            log_format = f"%(asctime)s [%(levelname)s] [tid=%(otelTraceID)s sid=%(otelSpanID)s] %(filename)s:%(funcName)s:%(lineno)s - %(message)s"
        else:
            log_format = (
                "%(asctime)s [%(levelname)s] "
                "%(filename)s:%(name)s.%(funcName)s:%(lineno)d - "
                "%(message)s"
            )

        formatter = logging.Formatter(
            fmt=log_format,
            datefmt="%Y-%m-%d %H:%M:%S",
        )

        # Clear existing handlers
        logging.root.handlers = []

        # Logs go to stdout; stderr is reserved for machine-readable CLI errors
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setLevel(level)
        console_handler.setFormatter(formatter)

        logging.root.setLevel(level)
        logging.root.addHandler(console_handler)
