"""Parameter checkpoints: JSON header + packed little-endian float32 data.

Layout: 8-byte little-endian uint64 header length, UTF-8 JSON header with
named tensor shapes and byte offsets (relative to the payload), then the
raw float32 data. Tensors are packed in sorted-name order so identical
parameter sets serialize to identical bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import FormatError

MAGIC = "matforge-checkpoint-v1"


def save_checkpoint(path: str, tensors: dict, meta: dict | None = None) -> None:
    arrays = {}
    for name, value in tensors.items():
        arr = value.detach().cpu().numpy() if hasattr(value, "detach") else np.asarray(value)
        arrays[name] = np.ascontiguousarray(arr, dtype="<f4")
    header: dict = {"format": MAGIC, "tensors": {}, "meta": meta or {}}
    offset = 0
    for name in sorted(arrays):
        arr = arrays[name]
        header["tensors"][name] = {"shape": list(arr.shape), "offset": offset}
        offset += arr.nbytes
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in sorted(arrays):
            fh.write(arrays[name].tobytes())


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        raw_len = fh.read(8)
        if len(raw_len) < 8:
            raise FormatError("checkpoint header mismatch: file too short")
        (header_len,) = struct.unpack("<Q", raw_len)
        blob = fh.read(header_len)
        if len(blob) < header_len:
            raise FormatError("checkpoint header mismatch: truncated header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"checkpoint header mismatch: {exc}") from exc
        if header.get("format") != MAGIC:
            raise FormatError("checkpoint header mismatch: wrong magic")
        payload = fh.read()
    tensors = {}
    for name, info in header["tensors"].items():
        shape = tuple(info["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = info["offset"]
        end = start + count * 4
        if end > len(payload):
            raise FormatError("checkpoint header mismatch: payload shorter than header claims")
        tensors[name] = np.frombuffer(payload[start:end], dtype="<f4").reshape(shape).copy()
    return tensors, header.get("meta", {})
