"""Deterministic JSON output: sorted keys, floats with 17 significant digits."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import sympy as sp

__all__ = ["dumps", "write_json", "format_float"]


def format_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = f"{x:.17g}"
    if all(c not in s for c in ".en"):
        s += ".0"
    return s


def _enc(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = "," + (pad if indent else " ")
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (np.bool_,)):
        return json.dumps(bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, sp.Basic):
        return json.dumps(sp.sstr(obj))
    if hasattr(obj, "value") and hasattr(obj, "name") and not isinstance(obj, dict):  # enums
        return json.dumps(obj.value)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = sorted((str(k), v) for k, v in obj.items())
        body = sep.join(f"{json.dumps(k)}: {_enc(v, indent, level + 1)}" for k, v in items)
        return "{" + pad + body + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        body = sep.join(_enc(v, indent, level + 1) for v in obj)
        return "[" + pad + body + end + "]"
    return json.dumps(str(obj))


def dumps(obj, indent: int = 2) -> str:
    return _enc(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))
