"""Log setup and structured one-line events (``SIM {json}``), easy to grep out of a campaign log."""
from __future__ import annotations

import json
import logging
from typing import Any, Optional, Union

logger = logging.getLogger("lrfhss")

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
LOG_DATEFMT = "%H:%M:%S"


def configure(level: Union[str, int, None] = None) -> int:
    """Configure root logging once; returns the numeric level in effect."""
    if isinstance(level, str):
        numeric = logging.getLevelName(level.strip().upper())
        if not isinstance(numeric, int):
            raise ValueError(f"unknown log level {level!r}")
    else:
        numeric = logging.INFO if level is None else level
    logging.basicConfig(level=numeric, format=LOG_FORMAT, datefmt=LOG_DATEFMT)
    logging.getLogger().setLevel(numeric)
    return numeric


def event_line(kind: str, **fields: Any) -> str:
    payload = {"event": f"sim.{kind}"}
    payload.update(fields)
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"), default=str)


def log_event(kind: str, level: int = logging.INFO, log: Optional[logging.Logger] = None, **fields: Any) -> None:
    target = log or logger
    if not target.isEnabledFor(level):
        return
    try:
        target.log(level, "SIM %s", event_line(kind, **fields))
    except (TypeError, ValueError):
        target.log(level, "SIM %s | %s", kind, fields)
