"""Matrix serialization: row-major CSV with 17 significant digits, or JSON."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def format_float(x):
    return format(float(x), ".17g")


def matrix_to_csv(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return "".join(",".join(format_float(v) for v in row) + "\n" for row in M)


def matrix_from_text(text):
    """Parse a matrix from CSV or from a JSON array of arrays."""
    stripped = text.strip()
    if not stripped:
        raise ValueError("empty matrix text")
    if stripped.startswith("["):
        M = np.asarray(json.loads(stripped), dtype=float)
    else:
        rows = [line for line in stripped.splitlines() if line.strip() and not line.lstrip().startswith("#")]
        M = np.asarray([[float(v) for v in line.split(",")] for line in rows], dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got {M.ndim} dimensions")
    return M


def read_matrix(path):
    return matrix_from_text(Path(path).read_text())


def write_matrix(path, M, fmt=None):
    """Write ``M`` as CSV, or as JSON when ``fmt == "json"`` or the suffix is ``.json``."""
    path = Path(path)
    if fmt is None:
        fmt = "json" if path.suffix == ".json" else "csv"
    if fmt == "json":
        path.write_text(json.dumps(np.asarray(M, dtype=float).tolist()) + "\n")
    else:
        path.write_text(matrix_to_csv(M))


def dump_json(obj):
    """Deterministic JSON text (sorted keys, full float precision)."""
    return json.dumps(obj, sort_keys=True, indent=2, default=_default) + "\n"


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
