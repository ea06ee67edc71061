"""Canonical JSON/CSV serialization shared by the library, CLI, and HTTP API.

Every number that leaves the package goes through the same 10-significant-digit
rounding so that CLI output, API responses, and golden files compare
byte-for-byte across platforms.
"""

from __future__ import annotations

import json
import math
from typing import Any

SIG_DIGITS = 10


def round_sig(x: float) -> float:
    """Round a finite float to the fixed serialization precision."""
    if x == 0:
        return 0.0
    return float(f"{x:.{SIG_DIGITS}g}")


def jsonify(obj: Any) -> Any:
    """Convert a payload to plain JSON types with canonical float rounding.

    Handles nested dicts/lists/tuples, numpy scalars and arrays (via .item()
    and .tolist()), and rejects NaN/inf, which have no JSON representation.
    """
    if obj is None or isinstance(obj, (str, bool, int)):
        return obj
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite number {obj!r} cannot be serialized")
        return round_sig(obj)
    if hasattr(obj, "item") and not hasattr(obj, "__len__"):
        return jsonify(obj.item())
    if hasattr(obj, "tolist"):
        return jsonify(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonify(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return jsonify(obj.to_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(payload: Any) -> str:
    """Serialize a payload to the canonical JSON text (trailing newline)."""
    return json.dumps(jsonify(payload), indent=2, allow_nan=False) + "\n"


def format_number(x: Any) -> str:
    """Format one number for CSV output at the fixed precision."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, int):
        return str(x)
    if hasattr(x, "item"):
        return format_number(x.item())
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite number {x!r} cannot be serialized")
        return f"{x:.{SIG_DIGITS}g}"
    return str(x)


def dump_csv(header: list[str], rows: list[tuple]) -> str:
    """Render rows as CSV text with canonical number formatting."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_number(v) for v in row))
    return "\n".join(lines) + "\n"
