"""
Flat-file export helpers.

All CSVs go through ``write_frame`` so that every command shares the same
optional timestamp header, float formatting and directory handling.
"""

from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union
import json
import logging

import pandas as pd

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FULL_PRECISION = "%.17g"


def timestamp_line() -> str:
    return f"# generated {datetime.now(timezone.utc).isoformat()}"


def write_frame(frame: pd.DataFrame, path: PathLike, timestamp: bool = True,
                float_format: Optional[str] = None) -> Path:
    """
    Write a DataFrame as CSV.

    Args:
        frame: Data to write; the index is dropped
        path: Destination file; parent directories are created
        timestamp: Prepend a ``# generated <iso time>`` comment line
        float_format: printf-style format; None keeps pandas' shortest
            round-trip representation

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        if timestamp:
            handle.write(timestamp_line() + "\n")
        frame.to_csv(handle, index=False, float_format=float_format, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} rows to {path}", extra={"path": str(path), "rows": len(frame)})
    return path


def read_frame(path: PathLike) -> pd.DataFrame:
    """Read a CSV written by ``write_frame``."""
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def write_key_values(values: Mapping[str, Any], path: Optional[PathLike] = None) -> str:
    """Render ``key=value`` lines; optionally also write them to ``path``."""
    lines = []
    for key, value in values.items():
        if isinstance(value, (list, tuple)):
            value = "[" + ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in value) + "]"
        lines.append(f"{key}={value}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return text


def write_manifest(payload: Dict[str, Any], path: PathLike, timestamp: bool = True) -> Path:
    """Write the JSON run manifest that sits next to a command's CSVs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = dict(payload)
    if timestamp:
        body["generated_at"] = datetime.now(timezone.utc).isoformat()
    path.write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def write_text(text: str, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path
