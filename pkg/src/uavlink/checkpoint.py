"""Parameter checkpoints: raw little-endian float64 blob + JSON manifest.

A checkpoint is two files sharing a prefix: ``<prefix>.bin`` holds the
arrays back to back, ``<prefix>.json`` lists name/shape/offset per array
plus the dtype tag, so any reader can reconstruct the dict without
pickling.
"""

import json
import os

import numpy as np

DTYPE = "<f8"


def save_params(prefix: str, arrays: dict):
    """Write named float64 arrays; manifest order follows dict order."""
    manifest = {"dtype": DTYPE, "arrays": []}
    offset = 0
    with open(prefix + ".bin", "wb") as fh:
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype=DTYPE)
            fh.write(arr.tobytes())
            manifest["arrays"].append(
                {"name": name, "shape": list(arr.shape), "offset_bytes": offset})
            offset += arr.nbytes
    with open(prefix + ".json", "w") as fh:
        json.dump(manifest, fh, indent=1)


def load_params(prefix: str) -> dict:
    """Read a checkpoint back into {name: float64 ndarray}."""
    with open(prefix + ".json") as fh:
        manifest = json.load(fh)
    blob = np.fromfile(prefix + ".bin", dtype=manifest["dtype"])
    out = {}
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset_bytes"] // 8
        out[entry["name"]] = blob[start:start + count].reshape(shape).copy()
    return out


def checkpoint_exists(prefix: str) -> bool:
    return os.path.exists(prefix + ".bin") and os.path.exists(prefix + ".json")


def save_module(prefix: str, params) -> None:
    """Save any object exposing .tensors (ModuformerParams / DeepRxParams)."""
    save_params(prefix, {k: t.values for k, t in params.tensors.items()})


def load_into_module(prefix: str, params) -> None:
    """Load a checkpoint into an initialized module (shapes must match)."""
    arrays = load_params(prefix)
    for name, tensor in params.tensors.items():
        arr = arrays[name]
        if arr.shape != tensor.values.shape:
            raise ValueError(f"checkpoint shape {arr.shape} != model {tensor.values.shape} "
                             f"for '{name}'")
        tensor.values[...] = arr
