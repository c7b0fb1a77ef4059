"""Flat binary array container used for model checkpoints.

Layout (all little-endian, documented in README):

    line 1: magic ``CIPS-CONTAINER 1``
    line 2: JSON manifest with sorted keys:
            {"arrays": [{"name", "dtype", "shape"}, ...], "meta": {...}}
    then:   raw C-order bytes of each array, in manifest order.

Writes are byte-deterministic for identical content, which is what lets
re-runs with the same seed produce identical checkpoints.
"""

import json

import numpy as np

MAGIC = b"CIPS-CONTAINER 1\n"

_ALLOWED_DTYPES = ("float64", "int64", "uint8")


def save_container(path, meta, arrays):
    """Write ``meta`` (JSON-serializable dict) and named arrays to ``path``."""
    manifest = {"arrays": [], "meta": meta}
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype.name not in _ALLOWED_DTYPES:
            raise ValueError(f"unsupported dtype {arr.dtype} for array {name!r}")
        manifest["arrays"].append(
            {"name": name, "dtype": arr.dtype.name, "shape": list(arr.shape)}
        )
        blobs.append(arr.tobytes())
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header.encode("utf-8"))
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)


def load_container(path):
    """Read a container back; returns (meta, dict of arrays)."""
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != MAGIC:
            raise ValueError(f"{path}: not a CIPS container (bad magic)")
        manifest = json.loads(fh.readline().decode("utf-8"))
        arrays = {}
        for entry in manifest["arrays"]:
            shape = tuple(entry["shape"])
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(shape)) if shape else 1
            data = fh.read(count * dtype.itemsize)
            if len(data) != count * dtype.itemsize:
                raise ValueError(f"{path}: truncated array {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()
    return manifest["meta"], arrays
