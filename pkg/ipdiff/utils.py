"""Utility functions for logging and output formatting."""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .config import FLOAT_DIGITS, VERBOSE

logger = logging.getLogger(__name__)


def log_section(title: str) -> None:
    """Log a section header."""
    if VERBOSE:
        logger.info(f"\n{'='*60}")
        logger.info(f"  {title}")
        logger.info(f"{'='*60}")


def log_detail(emoji: str, message: str, details: str = "") -> None:
    """Log a detailed message with optional details."""
    if VERBOSE:
        logger.info(f"{emoji} {message}")
        if details:
            for line in details.split('\n'):
                if line.strip():
                    logger.info(f"  → {line.strip()}")


def format_float(x: Any) -> str:
    """Lossless decimal rendering of a float."""
    v = float(x)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, f".{FLOAT_DIGITS}g")


def format_cell(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format_float(x)
    return str(x)


def to_jsonable(obj: Any) -> Any:
    """Convert numpy containers and scalars into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no NaN/inf; keep the value readable and round-trippable
        return v if math.isfinite(v) else format_float(v)
    if hasattr(obj, "model_dump"):
        return to_jsonable(obj.model_dump(mode="python"))
    return obj


def _dumps(obj: Any) -> str:
    # repr of a Python float is the shortest string that round-trips, at most 17 digits
    return json.dumps(to_jsonable(obj), sort_keys=True)


def provenance(config_hash: str, seed: int) -> Dict[str, Any]:
    return {"config_hash": config_hash, "master_seed": int(seed)}


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]],
              meta: Optional[Dict[str, Any]] = None) -> Path:
    """Write a CSV with a header row; provenance goes in a leading comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines: List[str] = []
    if meta:
        lines.append("# " + ",".join(f"{k}={v}" for k, v in sorted(meta.items())))
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format_cell(x) for x in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_ndjson(path: Path, records: Iterable[Dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(_dumps(rec) + "\n")
    return path


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(payload), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def read_ndjson(path: Path) -> List[Dict[str, Any]]:
    with Path(path).open("r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def format_levels(levels: Sequence[float]) -> str:
    return ", ".join(f"{y:g}" for y in levels)
