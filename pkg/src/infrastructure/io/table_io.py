"""
# src/infrastructure/io/table_io.py

CSV tables with fixed float formatting so reruns are byte-identical

固定浮点格式的 CSV 表格读写, 保证重复运行结果字节一致
"""


from __future__ import annotations
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union
import csv
import logging


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _format(value: Any, precision: int) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.{precision}f}"
    if hasattr(value, "item"):
        # numpy scalars
        return _format(value.item(), precision)
    return str(value)


def write_table(rows: Iterable[Dict[str, Any]], fieldnames: Sequence[str], path: PathLike, precision: int = 6) -> Path:
    """
    Write dict rows as CSV, columns in the given order

    params
    ------
    rows: Iterable[Dict[str, Any]] - one dict per row, extra keys are ignored
    fieldnames: Sequence[str] - header and column order
    path: PathLike - target file, parent directories are created
    precision: int - digits after the decimal point for floats

    return
    ------
    Path - the written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _format(row.get(key, ""), precision) for key in fieldnames})
    logger.debug(f"Wrote table {path}")
    return path


def read_table(path: PathLike) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


__all__ = ["write_table", "read_table"]
