"""Single-file weight checkpoints.

Layout: one canonical JSON line (sorted keys) holding the format version,
the model config, optional extra metadata and a manifest of named arrays
(shape + byte offset + byte length), then a newline, then the raw blobs —
little-endian float64, row-major, in manifest order.  Writing the same
arrays twice yields bytewise-identical files.
"""

from __future__ import annotations

import json
from typing import Optional

import numpy as np

FORMAT_VERSION = "icmf-v1"


def save_checkpoint(path, config: dict, arrays: dict[str, np.ndarray],
                    extra: Optional[dict] = None) -> None:
    manifest = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        blob = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape),
                         "offset": offset, "nbytes": len(blob)})
        offset += len(blob)
        blobs.append(blob)
    header = {"version": FORMAT_VERSION, "config": config,
              "extra": extra or {}, "manifest": manifest}
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode())
        f.write(b"\n")
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        header_line = f.readline()
        body = f.read()
    header = json.loads(header_line)
    if header.get("version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported checkpoint version {header.get('version')!r}, "
            f"expected {FORMAT_VERSION!r}")
    arrays = {}
    for entry in header["manifest"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(body):
            raise ValueError(f"checkpoint truncated: blob {entry['name']!r} "
                             f"ends at byte {start + nbytes}, file has {len(body)}")
        flat = np.frombuffer(body[start:start + nbytes], dtype="<f8")
        arrays[entry["name"]] = flat.reshape(entry["shape"]).astype(np.float64)
    return header["config"], arrays, header.get("extra", {})
