"""
Curve, trace and report files.

Curves are JSON documents {format_version, n, points, metadata}; floats are
written with Python's shortest round-trip repr, so load(save(c)) is bit-exact.
Traces are CSV with the fixed TRACE_COLUMNS header and 17 significant digits.
"""

import json
import logging
import math
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd
import scipy

from curve_geometry import ClosedCurve, CurveValidationError
from symmetric_optimizer import TRACE_COLUMNS, OptimizationTrace

logger = logging.getLogger(__name__)

CURVE_FORMAT_VERSION = 1
PACKAGE_VERSION = "0.1.0"
CURVE_KEYS = ("format_version", "n", "points", "metadata")

PathLike = Union[str, Path]


class CurveFileError(ValueError):
    """Malformed curve file; `index` names the offending point when known."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


def curve_to_dict(curve: ClosedCurve, metadata: Optional[Dict[str, Any]] = None) -> dict:
    return {
        "format_version": CURVE_FORMAT_VERSION,
        "n": curve.n,
        "points": [[float(v) for v in row] for row in curve.points],
        "metadata": dict(metadata or {}),
    }


def save_curve(curve: ClosedCurve, path: PathLike, metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    write_json(curve_to_dict(curve, metadata), path)
    logger.info(f"[IO] wrote curve n={curve.n} to {path}")
    return path


def curve_from_dict(doc: Any, source: str = "<memory>") -> ClosedCurve:
    if not isinstance(doc, dict):
        raise CurveFileError(f"{source}: top level must be an object")
    missing = [key for key in CURVE_KEYS if key not in doc]
    if missing:
        raise CurveFileError(f"{source}: missing keys {missing}")
    if doc["format_version"] != CURVE_FORMAT_VERSION:
        raise CurveFileError(f"{source}: unsupported format_version {doc['format_version']!r}")
    if not isinstance(doc["metadata"], dict):
        raise CurveFileError(f"{source}: metadata must be an object")
    points = doc["points"]
    n = doc["n"]
    if not isinstance(n, int) or isinstance(n, bool):
        raise CurveFileError(f"{source}: n must be an integer")
    if not isinstance(points, list):
        raise CurveFileError(f"{source}: points must be a list")
    if len(points) != n:
        raise CurveFileError(f"{source}: n={n} but {len(points)} points given")
    for idx, row in enumerate(points):
        if not isinstance(row, list) or len(row) != 3:
            raise CurveFileError(f"{source}: point {idx} is not a 3-vector", index=idx)
        for value in row:
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise CurveFileError(f"{source}: point {idx} has a non-finite coordinate", index=idx)
    try:
        return ClosedCurve(np.array(points, dtype=float))
    except CurveValidationError as exc:
        raise CurveFileError(f"{source}: {exc}", index=exc.index) from exc


def load_curve(path: PathLike) -> ClosedCurve:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CurveFileError(f"cannot read curve file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CurveFileError(f"{path}: invalid JSON ({exc})") from exc
    curve = curve_from_dict(doc, source=str(path))
    logger.debug(f"[IO] loaded curve n={curve.n} from {path}")
    return curve


def write_json(doc: Any, path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2, allow_nan=False)
            f.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def write_trace(trace: OptimizationTrace, path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        trace.to_frame().to_csv(path, index=False, float_format="%.17g")
    except OSError as exc:
        raise OSError(f"cannot write trace {path}: {exc}") from exc
    logger.info(f"[IO] wrote {len(trace)} trace rows to {path}")
    return path


def load_trace(path: PathLike) -> OptimizationTrace:
    path = Path(path)
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns) != TRACE_COLUMNS:
        raise ValueError(f"{path}: unexpected trace header {list(frame.columns)}")
    return OptimizationTrace.from_frame(frame)


@dataclass
class RunManifest:
    """Everything needed to reproduce a minimization run."""

    command: str
    parameters: Dict[str, Any]
    knot: Dict[str, Any] = field(default_factory=dict)
    symmetry: Dict[str, Any] = field(default_factory=dict)
    threads: int = 1
    outputs: Dict[str, str] = field(default_factory=dict)
    result: Dict[str, Any] = field(default_factory=dict)
    versions: Dict[str, str] = field(default_factory=dict)
    package_version: str = PACKAGE_VERSION
    wall_clock_s: float = 0.0

    @classmethod
    def collect_versions(cls) -> Dict[str, str]:
        return {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        }

    def to_dict(self) -> dict:
        return asdict(self)


def write_manifest(manifest: RunManifest, path: PathLike) -> Path:
    out = write_json(manifest.to_dict(), path)
    logger.info(f"[IO] wrote run manifest to {out}")
    return out
