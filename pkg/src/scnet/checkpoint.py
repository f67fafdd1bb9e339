"""Minimal versioned checkpoint container.

Layout (all integers little-endian):

    8 bytes   magic "SCNET001"
    u64       model text length, then that many UTF-8 bytes
    u64       step count
    u32       metadata count, then (u32-len key, u32-len value) pairs
    u32       parameter count, then per parameter:
                  u32-len name, 2-byte dtype tag (f4/f8),
                  u32 ndim, u64 per dim, u64 payload length, payload

Scalars are stored little-endian regardless of host order; a reload is
bit-identical to what was saved.
"""

import struct

import numpy as np

from . import model as model_mod
from .errors import CheckpointError

MAGIC = b"SCNET001"
_DTYPE_TAGS = {np.dtype(np.float32): b"f4", np.dtype(np.float64): b"f8"}
_TAG_DTYPES = {b"f4": "<f4", b"f8": "<f8"}


def save(path, spec, state, metadata=None):
    metadata = metadata or {}
    spec_text = model_mod.format_spec(spec).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(spec_text)))
        fh.write(spec_text)
        fh.write(struct.pack("<Q", state.step_count))
        fh.write(struct.pack("<I", len(metadata)))
        for key, value in sorted(metadata.items()):
            for part in (str(key), str(value)):
                raw = part.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
        fh.write(struct.pack("<I", len(state.params)))
        for name in sorted(state.params):
            arr = state.params[name]
            if arr.dtype not in _DTYPE_TAGS:
                raise CheckpointError(
                    f"parameter {name} has unsupported dtype {arr.dtype}")
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_name)))
            fh.write(raw_name)
            fh.write(_DTYPE_TAGS[arr.dtype])
            fh.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            payload = np.ascontiguousarray(arr).astype(
                arr.dtype.newbyteorder("<"), copy=False).tobytes()
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)


class _Reader:
    def __init__(self, fh, path):
        self.fh = fh
        self.path = path

    def take(self, count, what):
        raw = self.fh.read(count)
        if len(raw) != count:
            raise CheckpointError(
                f"{self.path}: truncated while reading {what} "
                f"(wanted {count} bytes, got {len(raw)})")
        return raw

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what):
        return struct.unpack("<Q", self.take(8, what))[0]

    def text(self, what):
        return self.take(self.u32(what), what).decode("utf-8")


def load(path):
    """Returns (spec, state, metadata); rejects unknown or broken files."""
    with open(path, "rb") as fh:
        r = _Reader(fh, path)
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(
                f"{path}: not a checkpoint (magic {magic!r}, "
                f"expected {MAGIC!r})")
        spec_len = r.u64("model text length")
        spec = model_mod.parse_spec(
            r.take(spec_len, "model text").decode("utf-8"))
        step_count = r.u64("step count")
        metadata = {}
        for _ in range(r.u32("metadata count")):
            key = r.text("metadata key")
            metadata[key] = r.text("metadata value")
        params = {}
        for _ in range(r.u32("parameter count")):
            name = r.text("parameter name")
            tag = r.take(2, f"dtype of {name}")
            if tag not in _TAG_DTYPES:
                raise CheckpointError(
                    f"{path}: parameter {name} has unknown dtype tag {tag!r}")
            ndim = r.u32(f"rank of {name}")
            shape = tuple(r.u64(f"dim {d} of {name}") for d in range(ndim))
            length = r.u64(f"payload length of {name}")
            dtype = np.dtype(_TAG_DTYPES[tag])
            expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if length != expected:
                raise CheckpointError(
                    f"{path}: parameter {name} claims {length} payload bytes "
                    f"but shape {shape} needs {expected}")
            payload = r.take(length, f"payload of {name}")
            arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
            params[name] = arr.astype(dtype.newbyteorder("="), copy=True)
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError(f"{path}: trailing bytes after last blob")
    state = model_mod.ModelState(params=params, step_count=step_count)
    return spec, state, metadata
