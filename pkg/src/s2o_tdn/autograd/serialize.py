"""Flat little-endian tensor buffers with a JSON text manifest.

A bundle is a directory holding ``manifest.json`` (names, dtypes, shapes,
byte offsets and free-form metadata) and ``tensors.bin`` (the concatenated
raw buffers). Writing the same content twice yields identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

MANIFEST = "manifest.json"
BUFFER = "tensors.bin"
_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8"}


def save_tensors(directory, tensors: Mapping[str, np.ndarray], meta: Mapping | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries, offset = [], 0
    with open(directory / BUFFER, "wb") as fh:
        for name, arr in tensors.items():
            arr = np.asarray(arr)
            kind = arr.dtype.name
            if kind not in _DTYPES:
                raise TypeError(f"{name}: cannot serialize dtype {kind}")
            raw = np.ascontiguousarray(arr, dtype=_DTYPES[kind]).tobytes()
            fh.write(raw)
            entries.append({"name": name, "dtype": kind, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
            offset += len(raw)
    doc = {"format": "s2o-tensors/1", "meta": dict(meta or {}), "tensors": entries}
    (directory / MANIFEST).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return directory


def load_tensors(directory) -> tuple[dict, dict]:
    """Return ``(tensors, meta)``; tensors keep manifest order."""
    directory = Path(directory)
    doc = json.loads((directory / MANIFEST).read_text())
    blob = (directory / BUFFER).read_bytes()
    tensors = {}
    for e in doc["tensors"]:
        raw = blob[e["offset"] : e["offset"] + e["nbytes"]]
        if len(raw) != e["nbytes"]:
            raise ValueError(f"{e['name']}: buffer truncated")
        arr = np.frombuffer(raw, dtype=_DTYPES[e["dtype"]]).astype(e["dtype"]).reshape(e["shape"])
        tensors[e["name"]] = arr
    return tensors, doc.get("meta", {})
