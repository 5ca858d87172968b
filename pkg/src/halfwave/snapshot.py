"""Binary field snapshots (.hwbl) and JSON sidecars.

Layout, little-endian: magic b"HWBL", version u32, n u64, r_max f64, sector u8,
then n (real, imag) float64 pairs.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .spectral import SectorField, make_grid

MAGIC = b"HWBL"
VERSION = 1
_HEADER = struct.Struct("<4sIQdB")


def to_bytes(f: SectorField) -> bytes:
    head = _HEADER.pack(MAGIC, VERSION, f.grid.n, f.grid.r_max, f.sector)
    body = np.ascontiguousarray(f.values, dtype="<c16").tobytes()
    return head + body


def from_bytes(data: bytes) -> SectorField:
    if len(data) < _HEADER.size:
        raise FormatError("snapshot shorter than its header")
    magic, version, n, r_max, sector = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported snapshot version {version}")
    expected = _HEADER.size + 16 * n
    if len(data) != expected:
        raise FormatError(f"snapshot has {len(data)} bytes, expected {expected}")
    values = np.frombuffer(data, dtype="<c16", offset=_HEADER.size, count=n)
    return SectorField(make_grid(int(n), float(r_max)), int(sector), values.astype(complex))


def write_field(path, f: SectorField) -> None:
    try:
        Path(path).write_bytes(to_bytes(f))
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc


def read_field(path) -> SectorField:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    return from_bytes(data)


def write_json(path, payload) -> None:
    try:
        text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed JSON in {path}: {exc}") from exc


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")
