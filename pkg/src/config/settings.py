"""
# src/config/settings.py

Configuration management and reading, environment variable processing

配置管理与读取类, 环境变量处理组件
"""


from __future__ import annotations
from pathlib import Path
from dotenv import dotenv_values
from typing import Dict, Any
import json
import logging

from .constants import CONSTANT_CONFIG


logger = logging.getLogger(__name__)


def _coerce(key: str, raw: Any, default: Any) -> Any:
    """
    Cast a raw .env string to the type of the constant it overrides
    """
    if raw is None or not isinstance(raw, str):
        return raw
    try:
        if isinstance(default, bool):
            if raw.strip().lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(raw)
            return raw.strip().lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, (list, dict)):
            return json.loads(raw)
        return raw
    except ValueError as exc:
        logger.critical(f"The value *{key}* cannot be read as {type(default).__name__}: {raw!r}")
        raise ValueError(f"The value *{key}* cannot be read as {type(default).__name__}: {raw!r}") from exc


CONFIG: Dict[str, Any] = dict(CONSTANT_CONFIG)

# .env overrides are optional; unknown keys are kept as plain strings
for key, raw in dotenv_values(Path(__file__).parent.parent.parent / ".env").items():
    CONFIG[key] = _coerce(key, raw, CONSTANT_CONFIG[key]) if key in CONSTANT_CONFIG else raw


__all__ = ["CONFIG"]
