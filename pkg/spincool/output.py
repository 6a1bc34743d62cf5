"""
Result file emission

Tables are written as CSV (12 significant digits, '.' decimal) or JSON records; every file
gets a `<stem>.config.json` sidecar holding the fully resolved run configuration.
"""

import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd

from spincool.exceptions import OutputError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def write_table(df: pd.DataFrame, path: str, config: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write a table with automatic format detection.

    Args:
        df: Table to write
        path: Output path ending in .csv or .json
        config: Resolved configuration for the sidecar (skipped when None)

    Returns:
        Path of the written table

    Raises:
        OutputError: If the format is unsupported or the file cannot be written
    """
    fmt = _detect_format(path)
    try:
        _ensure_parent(path)
        if fmt == "csv":
            df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        else:
            _dump_json(df.to_dict(orient="records"), path)
        if config is not None:
            write_sidecar(path, config)
    except OSError as e:
        raise OutputError(f"Cannot write {path}: {e}", path=path) from e
    logger.info(f"Wrote {len(df)} rows to {path}")
    return Path(path)


def write_record(data: Dict[str, Any], path: str, config: Optional[Dict[str, Any]] = None) -> Path:
    """Write one JSON document (keys sorted, so equal inputs give equal bytes)."""
    if _detect_format(path) != "json":
        raise OutputError(f"Records are JSON only, got {path}", path=path)
    try:
        _ensure_parent(path)
        _dump_json(data, path)
        if config is not None:
            write_sidecar(path, config)
    except OSError as e:
        raise OutputError(f"Cannot write {path}: {e}", path=path) from e
    return Path(path)


def write_sidecar(path: str, config: Dict[str, Any]) -> Path:
    sidecar = sidecar_path(path)
    _dump_json(config, str(sidecar))
    return sidecar


def sidecar_path(path: str) -> Path:
    p = Path(path)
    return p.with_name(f"{p.stem}.config.json")


def _detect_format(path: str) -> str:
    """Detect format from file extension"""
    ext = os.path.splitext(path)[1].lower()

    format_map = {
        '.csv': 'csv',
        '.json': 'json',
    }

    if ext not in format_map:
        raise OutputError(f"Unsupported file format: {ext}. Supported: .csv, .json", path=path)

    return format_map[ext]


def _ensure_parent(path: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)


def _clean(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _dump_json(data: Any, path: str) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(_clean(data), f, indent=2, sort_keys=True)
        f.write("\n")
