"""Binary artifact container and run manifests.

Every binary artifact is a single file: one JSON header line (utf-8, ending
in \\n) followed by raw little-endian 32-bit floats for each declared array,
concatenated in declaration order. The header's ``arrays`` field records
name and shape for each block so readers need no other context.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import Iterable

import numpy as np

FORMAT_TAG = "geomreg-blob-v1"


def write_blob(path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write header + named float32 arrays; insertion order is file order."""
    meta = dict(header)
    meta["format"] = FORMAT_TAG
    meta["arrays"] = [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()]
    with open(path, "wb") as fh:
        fh.write(json.dumps(meta, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def read_blob(path):
    """Read (header, arrays) written by write_blob."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != FORMAT_TAG:
            raise ValueError(f"{path}: not a {FORMAT_TAG} file")
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(4 * n)
            if len(buf) != 4 * n:
                raise ValueError(f"{path}: truncated array {spec['name']}")
            arrays[spec["name"]] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
    return header, arrays


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def json_dumps(obj) -> str:
    """Canonical JSON used for manifests and history: stable key order."""
    return json.dumps(obj, sort_keys=True, indent=2)


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json_dumps(obj))
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_run_manifest(out_dir, command: str, config: dict,
                       inputs: Iterable[str], outputs: Iterable[str],
                       seed: int, version: str) -> str:
    """Record what a command did, with input digests for exact replay."""
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "version": version,
    }
    path = os.path.join(out_dir, "manifest.json")
    write_json(path, manifest)
    return path
