"""Binary parameter container and single-file checkpoints.

Parameter container layout (all integers little-endian)::

    b"CAEMPARM" | u16 version | u32 count
    count x ( u16 name_len | name (UTF-8) | u8 ndim | ndim x u32 dim | float64 LE data )

Checkpoint layout::

    b"CAEMCKPT" | u16 version | u32 json_len | JSON metadata (sorted keys) | parameter container

Entries keep insertion order and float64 values round-trip bit for bit.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct

import numpy as np

from .errors import FormatError

PARAM_MAGIC = b"CAEMPARM"
CKPT_MAGIC = b"CAEMCKPT"
VERSION = 1


def encode_parameters(state):
    """Serialize an ordered ``{name: ndarray}`` mapping to bytes."""
    buf = io.BytesIO()
    buf.write(PARAM_MAGIC)
    buf.write(struct.pack("<HI", VERSION, len(state)))
    for name, arr in state.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype=np.float64)
        if len(raw) > 0xFFFF or arr.ndim > 0xFF:
            raise FormatError(f"parameter {name!r} cannot be encoded")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError("truncated data")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _decode_parameters(reader):
    if bytes(reader.take(len(PARAM_MAGIC))) != PARAM_MAGIC:
        raise FormatError("not a parameter container (bad magic)")
    version, count = reader.unpack("<HI")
    if version != VERSION:
        raise FormatError(f"unsupported parameter container version {version}")
    state = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = bytes(reader.take(name_len)).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I")
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(bytes(reader.take(8 * size)), dtype="<f8").astype(np.float64).reshape(shape)
        if name in state:
            raise FormatError(f"duplicate parameter {name!r}")
        state[name] = arr
    return state


def decode_parameters(data):
    reader = _Reader(data)
    state = _decode_parameters(reader)
    if reader.pos != len(reader.data):
        raise FormatError("trailing bytes after parameter container")
    return state


def save_parameters(path, state):
    with open(path, "wb") as fh:
        fh.write(encode_parameters(state))


def load_parameters(path):
    with open(path, "rb") as fh:
        return decode_parameters(fh.read())


def encode_checkpoint(meta, state):
    text = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return CKPT_MAGIC + struct.pack("<HI", VERSION, len(text)) + text + encode_parameters(state)


def decode_checkpoint(data):
    """Return ``(meta, state)`` from checkpoint bytes."""
    reader = _Reader(data)
    if bytes(reader.take(len(CKPT_MAGIC))) != CKPT_MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    version, length = reader.unpack("<HI")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        meta = json.loads(bytes(reader.take(length)).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint metadata: {exc}") from None
    state = _decode_parameters(reader)
    if reader.pos != len(reader.data):
        raise FormatError("trailing bytes after checkpoint")
    return meta, state


def save_checkpoint(path, meta, state):
    data = encode_checkpoint(meta, state)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())


def file_digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
