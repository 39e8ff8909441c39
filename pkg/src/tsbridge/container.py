"""Generic versioned binary container: JSON header plus float64 payloads.

Layout: 14-byte magic, little-endian uint32 version, little-endian uint64
header length, sorted-key JSON header carrying an ``arrays`` manifest of
(name, shape) entries, then each array's row-major float64 bytes in
manifest order. Output bytes are a pure function of the content.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import SchemaError


def write_container(path, magic: bytes, version: int, meta: dict,
                    arrays: list[tuple[str, np.ndarray]]):
    header = dict(meta)
    header["arrays"] = [{"name": n, "shape": list(np.asarray(a).shape)} for n, a in arrays]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", version))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())


def read_container(path, magic: bytes, version: int) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    with fh:
        found = fh.read(len(magic))
        if found != magic:
            raise SchemaError(f"{path}: bad magic, not a {magic.decode(errors='replace').strip(chr(0))} file")
        (file_version,) = struct.unpack("<I", fh.read(4))
        if file_version != version:
            raise SchemaError(
                f"{path}: file format version {file_version}, this build reads version {version}"
            )
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode())
        payload: dict[str, np.ndarray] = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise SchemaError(f"{path}: truncated payload for {entry['name']}")
            payload[entry["name"]] = np.frombuffer(buf, dtype=np.float64).reshape(shape).copy()
    return header, payload
