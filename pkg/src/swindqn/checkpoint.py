"""Binary checkpoint format.

Layout (all integers little-endian):

    magic "SWDQ" | format version u32 | tensor count u32
    per tensor: name length u16 | name UTF-8 | dtype tag u8 | rank u8
                | dims u64[rank] | raw little-endian payload
    optimizer: step count u64 | learning rate f64 | beta1 f64 | beta2 f64
               | epsilon f64 | moment tensor count u32 | tensor records
               (names prefixed "m." / "v.")
    frame counter u64
    manifest: JSON length u32 | JSON UTF-8

Saving is atomic (temp file + rename), and save -> load -> save produces
byte-identical files.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import AdamState, Tensor

MAGIC = b"SWDQ"
FORMAT_VERSION = 1

_DTYPE_TAGS = {
    np.dtype("float32"): 1,
    np.dtype("float64"): 2,
    np.dtype("int64"): 3,
    np.dtype("uint8"): 4,
}
_TAG_DTYPES = {tag: dt for dt, tag in _DTYPE_TAGS.items()}


class CheckpointError(Exception):
    """Raised on bad magic, unsupported version, or truncated/garbled data."""


@dataclass
class Checkpoint:
    """In-memory image of a checkpoint file."""

    params: dict[str, np.ndarray]
    optimizer: AdamState
    frames: int
    manifest_json: str = "{}"
    version: int = FORMAT_VERSION


def _pack_tensor(name: str, array: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    if len(encoded) > 0xFFFF:
        raise ValueError(f"tensor name too long: {name!r}")
    dtype = array.dtype
    if dtype not in _DTYPE_TAGS:
        raise ValueError(f"unsupported dtype {dtype} for tensor {name!r}")
    head = struct.pack("<H", len(encoded)) + encoded
    head += struct.pack("<BB", _DTYPE_TAGS[dtype], array.ndim)
    head += struct.pack(f"<{array.ndim}Q", *array.shape)
    payload = np.ascontiguousarray(array, dtype=dtype.newbyteorder("<")).tobytes()
    return head + payload


class _Reader:
    """Cursor over checkpoint bytes with truncation checking."""

    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, "
                f"file has {len(self.blob)}"
            )
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_tensor(reader: _Reader) -> tuple[str, np.ndarray]:
    (name_len,) = reader.unpack("<H")
    name = reader.take(name_len).decode("utf-8")
    tag, rank = reader.unpack("<BB")
    if tag not in _TAG_DTYPES:
        raise CheckpointError(f"unknown dtype tag {tag} for tensor {name!r}")
    dims = reader.unpack(f"<{rank}Q")
    dtype = _TAG_DTYPES[tag]
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    raw = reader.take(count * dtype.itemsize)
    array = np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(dtype)
    return name, array.reshape(dims)


def serialize(ckpt: Checkpoint) -> bytes:
    out = bytearray(MAGIC)
    out += struct.pack("<I", ckpt.version)
    out += struct.pack("<I", len(ckpt.params))
    for name, array in ckpt.params.items():
        out += _pack_tensor(name, array)
    opt = ckpt.optimizer
    out += struct.pack("<Qdddd", opt.step_count, opt.learning_rate,
                       opt.beta1, opt.beta2, opt.epsilon)
    moments = [(f"m.{k}", v) for k, v in opt.first_moment.items()]
    moments += [(f"v.{k}", v) for k, v in opt.second_moment.items()]
    out += struct.pack("<I", len(moments))
    for name, array in moments:
        out += _pack_tensor(name, np.asarray(array))
    out += struct.pack("<Q", ckpt.frames)
    manifest = ckpt.manifest_json.encode("utf-8")
    out += struct.pack("<I", len(manifest)) + manifest
    return bytes(out)


def deserialize(blob: bytes) -> Checkpoint:
    reader = _Reader(blob)
    if reader.take(4) != MAGIC:
        raise CheckpointError("bad magic bytes: not a checkpoint file")
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format version {version} (expected {FORMAT_VERSION})"
        )
    (count,) = reader.unpack("<I")
    params = dict(_read_tensor(reader) for _ in range(count))
    step_count, lr, beta1, beta2, eps = reader.unpack("<Qdddd")
    optimizer = AdamState(learning_rate=lr, beta1=beta1, beta2=beta2,
                          epsilon=eps, step_count=step_count)
    (n_moments,) = reader.unpack("<I")
    for _ in range(n_moments):
        name, array = _read_tensor(reader)
        kind, _, key = name.partition(".")
        if kind == "m":
            optimizer.first_moment[key] = array
        elif kind == "v":
            optimizer.second_moment[key] = array
        else:
            raise CheckpointError(f"unexpected optimizer tensor {name!r}")
    (frames,) = reader.unpack("<Q")
    (manifest_len,) = reader.unpack("<I")
    manifest_json = reader.take(manifest_len).decode("utf-8")
    if reader.pos != len(blob):
        raise CheckpointError(f"{len(blob) - reader.pos} trailing bytes after manifest")
    return Checkpoint(params=params, optimizer=optimizer, frames=frames,
                      manifest_json=manifest_json, version=version)


def atomic_write_bytes(path: str | Path, blob: bytes) -> None:
    """Write via a temp file in the same directory, then rename over."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path: str | Path, params: dict[str, Tensor], optimizer: AdamState,
         frames: int, manifest_json: str = "{}") -> None:
    ckpt = Checkpoint(params={k: v.data for k, v in params.items()},
                      optimizer=optimizer, frames=frames,
                      manifest_json=manifest_json)
    atomic_write_bytes(path, serialize(ckpt))


def load(path: str | Path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return deserialize(blob)


def restore_into(ckpt: Checkpoint, params: dict[str, Tensor]) -> None:
    """Copy checkpoint arrays into an existing parameter dict, by name."""
    missing = sorted(set(params) ^ set(ckpt.params))
    if missing:
        raise CheckpointError(f"parameter name mismatch: {missing}")
    for name, tensor in params.items():
        stored = ckpt.params[name]
        if stored.shape != tensor.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: {stored.shape} vs {tensor.data.shape}"
            )
        tensor.data[...] = stored
