"""Reader/writer for the complex tensor container exchanged with the
estimation workbench.

Layout (header integers little-endian):

    bytes 0..7    magic  b"CPXTNS01"
    bytes 8..9    format version (u16, currently 1)
    byte  10      payload endianness tag: ord('L') or ord('B')
    byte  11      scalar width in bytes: 4 (float32) or 8 (float64)
    byte  12      number of dimensions (1..8)
    bytes 13..15  zero padding
    then          ndim * u64 dimension sizes
    then          payload: row-major, interleaved re/im scalar pairs

A JSON sidecar at <path>.meta.json carries free-form metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ContainerFormatError

MAGIC = b"CPXTNS01"
VERSION = 1
_HEADER = struct.Struct("<8sHBBB3x")
_MAX_NDIM = 8


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def write_complex_tensor(path, array: np.ndarray, meta: dict | None = None) -> Path:
    """Write a complex tensor plus optional metadata sidecar.

    complex64 payloads use 4-byte scalars, anything else is widened to
    complex128.  Always written little-endian.
    """
    path = Path(path)
    array = np.asarray(array)
    if array.ndim < 1 or array.ndim > _MAX_NDIM:
        raise ContainerFormatError(f"ndim: unsupported rank {array.ndim}")
    if array.dtype == np.complex64:
        width, dtype = 4, np.dtype("<c8")
    else:
        width, dtype = 8, np.dtype("<c16")
    payload = np.ascontiguousarray(array, dtype=dtype)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, ord("L"), width, array.ndim))
        fh.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        fh.write(payload.tobytes())
    if meta is not None:
        with open(_sidecar(path), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return path


def read_complex_tensor(path) -> tuple[np.ndarray, dict]:
    """Read a tensor container; returns (array, metadata dict).

    Raises ContainerFormatError naming the offending field on any
    mismatch of magic, version, endianness tag, width, rank or size.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ContainerFormatError("header: file shorter than fixed header")
    magic, version, endian, width, ndim = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ContainerFormatError(f"magic: expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise ContainerFormatError(f"version: unsupported value {version}")
    if endian not in (ord("L"), ord("B")):
        raise ContainerFormatError(f"endianness: unknown tag 0x{endian:02x}")
    if width not in (4, 8):
        raise ContainerFormatError(f"width: unsupported scalar width {width}")
    if not 1 <= ndim <= _MAX_NDIM:
        raise ContainerFormatError(f"ndim: value {ndim} outside 1..{_MAX_NDIM}")
    offset = _HEADER.size
    if len(raw) < offset + 8 * ndim:
        raise ContainerFormatError("shape: file truncated inside dimension list")
    shape = struct.unpack_from(f"<{ndim}Q", raw, offset)
    offset += 8 * ndim
    count = int(np.prod(shape, dtype=np.int64))
    expected = count * 2 * width
    if len(raw) - offset != expected:
        raise ContainerFormatError(
            f"payload: expected {expected} bytes for shape {shape}, found {len(raw) - offset}")
    sign = "<" if endian == ord("L") else ">"
    dtype = np.dtype(f"{sign}c{2 * width}")
    array = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape)
    meta_path = _sidecar(path)
    meta: dict = {}
    if meta_path.exists():
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    return array.copy(), meta
