"""Tensor checkpoints: a JSON manifest plus one flat little-endian blob."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ShapeError

MANIFEST = "manifest.json"
BLOB = "tensors.bin"


def save_tensors(directory, tensors: dict, extra: dict | None = None) -> Path:
    """Write ``tensors`` (name -> array or Tensor) in insertion order.

    ``extra`` is stored verbatim under ``"meta"`` in the manifest; it must be
    JSON-serializable. Output is byte-identical for identical inputs.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    with open(directory / BLOB, "wb") as fh:
        for name, t in tensors.items():
            arr = np.asarray(getattr(t, "data", t))
            le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            raw = np.ascontiguousarray(le).tobytes()
            fh.write(raw)
            entries.append({"name": name, "shape": list(arr.shape), "dtype": le.dtype.str,
                            "offset": offset, "nbytes": len(raw)})
            offset += len(raw)
    manifest = {"format": "pmcw-isac-checkpoint", "version": 1, "tensors": entries,
                "meta": extra or {}}
    (directory / MANIFEST).write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return directory


def load_tensors(directory, expected_shapes: dict | None = None):
    """Return ``(tensors, meta)``; shapes are validated against ``expected_shapes`` if given."""
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text())
    blob = (directory / BLOB).read_bytes()
    tensors = {}
    for e in manifest["tensors"]:
        raw = blob[e["offset"]:e["offset"] + e["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(e["shape"])
        tensors[e["name"]] = arr.astype(arr.dtype.newbyteorder("="))
    if expected_shapes is not None:
        missing = sorted(set(expected_shapes) - set(tensors))
        extra = sorted(set(tensors) - set(expected_shapes))
        if missing or extra:
            raise ShapeError(f"checkpoint tensor set mismatch: missing={missing} unexpected={extra}")
        for name, shape in expected_shapes.items():
            if tuple(tensors[name].shape) != tuple(shape):
                raise ShapeError(
                    f"checkpoint tensor {name!r} has shape {tensors[name].shape}, expected {tuple(shape)}")
    return tensors, manifest.get("meta", {})
