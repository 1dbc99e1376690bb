"""JSON manifest + flat little-endian float64 payload.

A bundle named ``stem`` is two files: ``stem.json`` and ``stem.bin``.  The
binary file is every array, C-order, concatenated in the order listed in the
manifest; each entry records its byte offset and shape so the payload can be
read without this package.
"""
import json
from pathlib import Path

import numpy as np

FORMAT = "astrolsm-bundle/1"


def save_bundle(stem, arrays, meta=None):
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    chunks = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape),
                        "offset_bytes": offset, "nbytes": arr.nbytes})
        offset += arr.nbytes
        chunks.append(arr.tobytes(order="C"))
    manifest = {
        "format": FORMAT,
        "payload": stem.name + ".bin",
        "dtype": "float64",
        "byte_order": "little",
        "layout": "arrays stored row-major (C order), concatenated in the order listed; "
                  "offset_bytes is relative to the start of the payload file",
        "total_bytes": offset,
        "arrays": entries,
        "meta": meta or {},
    }
    with open(stem.with_suffix(".bin"), "wb") as fh:
        for chunk in chunks:
            fh.write(chunk)
    with open(stem.with_suffix(".json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return stem.with_suffix(".json")


def load_bundle(path):
    """Return ``(arrays, meta)``.  ``path`` may be the manifest, the payload, or the stem."""
    path = Path(path)
    manifest_path = path.with_suffix(".json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != FORMAT:
        raise ValueError(f"{manifest_path}: unknown bundle format {manifest.get('format')!r}")
    raw = (manifest_path.parent / manifest["payload"]).read_bytes()
    if len(raw) != manifest["total_bytes"]:
        raise ValueError(f"{manifest_path}: payload is {len(raw)} bytes, "
                         f"manifest says {manifest['total_bytes']}")
    arrays = {}
    for entry in manifest["arrays"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        if count == 0:
            arrays[entry["name"]] = np.zeros(entry["shape"])
            continue
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=entry["offset_bytes"])
        arrays[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float64)
    return arrays, manifest["meta"]
