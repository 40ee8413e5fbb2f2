"""Versioned JSON save/load for named parameter sets.

The on-disk document maps parameter names to shape plus a flat value array.
Floats round-trip bit-exactly (json emits shortest-repr doubles), so a
load(save(P)) reproduces every value.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class ParamsError(Exception):
    """Problems with a parameter document."""


class ParamsParseError(ParamsError):
    """Malformed file; message includes the byte offset when known."""


class ParamsVersionError(ParamsError):
    """Document version not understood by this code."""


def save_params(path, params: dict, meta: dict | None = None) -> None:
    """Write a name -> array mapping as a version-tagged JSON document."""
    doc = {
        "format_version": FORMAT_VERSION,
        "meta": meta or {},
        "params": {
            name: {
                "shape": list(np.asarray(arr).shape),
                "values": [float(v) for v in np.asarray(arr, dtype=np.float64).ravel()],
            }
            for name, arr in params.items()
        },
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")


def load_params(path) -> dict:
    """Read a parameter document back into a name -> float64 array mapping."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        offset = len(text[:err.pos].encode("utf-8"))
        raise ParamsParseError(
            f"{path}: malformed parameter file at byte offset {offset}: {err.msg}"
        ) from err
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ParamsParseError(f"{path}: not a parameter document (missing format_version)")
    if doc["format_version"] != FORMAT_VERSION:
        raise ParamsVersionError(
            f"{path}: unsupported format_version {doc['format_version']!r}, "
            f"expected {FORMAT_VERSION}")
    out = {}
    try:
        for name, entry in doc["params"].items():
            arr = np.array(entry["values"], dtype=np.float64)
            out[name] = arr.reshape(entry["shape"])
    except (KeyError, TypeError, ValueError) as err:
        raise ParamsParseError(f"{path}: bad parameter entry: {err}") from err
    return out


def load_meta(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    doc = json.loads(text)
    return doc.get("meta", {})
