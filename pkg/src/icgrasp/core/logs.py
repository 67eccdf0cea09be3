"""Logging setup: JSON-lines records on stderr."""

import json
import logging
import sys
from datetime import datetime, timezone
from typing import Optional

from .settings import settings

# Attributes every LogRecord has; anything else came in through ``extra=``.
_RESERVED = set(logging.LogRecord("", 0, "", 0, "", None, None).__dict__) | {"message", "asctime"}


class JsonLinesFormatter(logging.Formatter):
    """Formats each record as one JSON object."""

    def format(self, record: logging.LogRecord) -> str:
        entry = {
            "time": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        for key, value in record.__dict__.items():
            if key not in _RESERVED and not key.startswith("_"):
                entry[key] = value
        if record.exc_info:
            entry["exc_info"] = self.formatException(record.exc_info)
        return json.dumps(entry, default=str)


def configure_logging(level: Optional[str] = None, json_lines: Optional[bool] = None) -> None:
    """Configure the root logger once per process.

    Args:
        level: Log level name (defaults to ``settings.LOG_LEVEL``)
        json_lines: Emit JSON lines (defaults to ``settings.LOG_JSON``)
    """
    level = level or settings.LOG_LEVEL
    json_lines = settings.LOG_JSON if json_lines is None else json_lines

    handler = logging.StreamHandler(sys.stderr)
    if json_lines:
        handler.setFormatter(JsonLinesFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))

    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(level.upper())
