"""
Deterministic report serialization and run manifests.

JSON reports use sorted keys and floats written with 17 significant digits, so
the same report always produces the same bytes and parses back to equal values.
"""

import json
import logging
import math
import platform
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
import scipy

from .__version__ import __version__
from .core.constants import MANIFEST_FILENAME, REPORT_SIGNIFICANT_DIGITS
from .core.exceptions import ReportError

logger = logging.getLogger(__name__)

_FLOAT_FORMAT = f"%.{REPORT_SIGNIFICANT_DIGITS}g"


def to_plain(obj: Any) -> Any:
    """Reduce reports, numpy values and tuples to JSON-compatible Python values."""
    if hasattr(obj, "to_dict") and callable(obj.to_dict) and not isinstance(obj, pd.DataFrame):
        return to_plain(obj.to_dict())
    if isinstance(obj, pd.DataFrame):
        return to_plain(obj.to_dict(orient="list"))
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, Enum):
        return obj.value
    if obj is None or isinstance(obj, str):
        return obj
    raise ReportError(f"cannot serialize value of type {type(obj).__name__}")


def _format_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    text = _FLOAT_FORMAT % x
    # keep floats recognizable as floats after parsing
    if all(c not in text for c in ".eEn"):
        text += ".0"
    return text


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(obj[k], indent, level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    return json.dumps(obj)


def dumps_report(report: Any, indent: int = 2) -> str:
    """Serialize a report (anything with `to_dict`, or plain data) deterministically."""
    return _encode(to_plain(report), indent, 0) + "\n"


def emit_report(report: Any, path: Union[str, Path]) -> Path:
    """Write `report` as deterministic JSON to `path`.

    Raises:
        ReportError: On any IO failure, with the path attached
    """
    path = Path(path)
    text = dumps_report(report)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise ReportError(f"cannot write report {path}: {e}", str(path)) from e
    logger.debug(f"Wrote report {path}")
    return path


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Write a table with the report float format and no index column."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=_FLOAT_FORMAT)
    except OSError as e:
        raise ReportError(f"cannot write table {path}: {e}", str(path)) from e
    logger.debug(f"Wrote table {path} ({len(frame)} rows)")
    return path


def versions() -> Dict[str, str]:
    return {
        "meanfield-social": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


@dataclass
class ArtifactWriter:
    """Writes the artifacts of one run into `output_dir` and records them."""

    output_dir: Path
    artifacts: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ReportError(f"output directory not writable: {e}", str(self.output_dir)) from e

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def _record(self, name: str) -> None:
        if name not in self.artifacts:
            self.artifacts.append(name)

    def json(self, name: str, report: Any) -> Path:
        out = emit_report(report, self.path(name))
        self._record(name)
        return out

    def csv(self, name: str, frame: pd.DataFrame) -> Path:
        out = write_csv(frame, self.path(name))
        self._record(name)
        return out

    def register(self, name: str) -> None:
        """Record a file written by someone else (e.g. a path dump)."""
        self._record(name)

    def manifest(
        self,
        command: str,
        seed: Optional[int],
        config_hash: str,
        resolved_hash: str,
        overrides: List[str],
        wall_time: float,
        status: str = "ok",
    ) -> Path:
        """Write manifest.json; only wall_time_seconds differs between identical runs."""
        manifest = {
            "command": command,
            "seed": seed,
            "config_sha256": config_hash,
            "resolved_config_sha256": resolved_hash,
            "overrides": list(overrides),
            "versions": versions(),
            "wall_time_seconds": wall_time,
            "status": status,
            "artifacts": sorted(self.artifacts),
        }
        return emit_report(manifest, self.path(MANIFEST_FILENAME))
