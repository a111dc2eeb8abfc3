"""Binary containers written by the pipeline.

Processed-cloud archive (``.lpca``)::

    b"LPCA" | uint32 version | uint32 count
    per cloud: uint16 id length | UTF-8 id | uint8 frame (0 Cartesian, 1 spherical)
               | uint8 has_intensity | uint32 N | N*3 float64 points | [N float64 intensity]

Descriptor-set file (``.lpds``)::

    b"LPDS" | uint32 version | uint32 dimension | uint32 count | uint8 role (0 db, 1 query)
    per row: uint16 id length | UTF-8 id | float64 timestamp, x, y, z (NaN when absent)
             | dimension float32 descriptor

All integers and floats are little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .cloud import Frame, PointCloud
from .errors import FormatError
from .evaluation import DescriptorSet

ARCHIVE_MAGIC = b"LPCA"
DESCRIPTOR_MAGIC = b"LPDS"
VERSION = 1
_FRAMES = [Frame.CARTESIAN, Frame.SPHERICAL]
_ROLES = ["database", "query"]


def _pack_id(s: str) -> bytes:
    b = s.encode("utf-8")
    if len(b) > 0xFFFF:
        raise FormatError("source id too long")
    return struct.pack("<H", len(b)) + b


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw, self.pos, self.path = raw, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise FormatError(f"{self.path}: truncated at byte {self.pos}")
        b = self.raw[self.pos:self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def ident(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")


def write_archive(clouds: Iterable[PointCloud], path) -> None:
    clouds = list(clouds)
    parts = [ARCHIVE_MAGIC, struct.pack("<II", VERSION, len(clouds))]
    for c in clouds:
        parts.append(_pack_id(c.source_id))
        parts.append(struct.pack("<BBI", _FRAMES.index(c.frame), c.has_intensity, len(c)))
        parts.append(np.asarray(c.points, dtype="<f8").tobytes())
        if c.has_intensity:
            parts.append(np.asarray(c.intensity, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_archive(path) -> list[PointCloud]:
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4) != ARCHIVE_MAGIC:
        raise FormatError(f"{path}: not a processed-cloud archive")
    version, count = r.unpack("<II")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported archive version {version}")
    out = []
    for _ in range(count):
        sid = r.ident()
        frame, has_i, n = r.unpack("<BBI")
        pts = np.frombuffer(r.take(24 * n), dtype="<f8").reshape(n, 3)
        inten = np.frombuffer(r.take(8 * n), dtype="<f8") if has_i else None
        out.append(PointCloud(pts, inten, _FRAMES[frame], source_id=sid))
    return out


def write_descriptor_set(ds: DescriptorSet, path) -> None:
    parts = [DESCRIPTOR_MAGIC,
             struct.pack("<IIIB", VERSION, ds.dim, len(ds), _ROLES.index(ds.role))]
    desc = np.asarray(ds.descriptors, dtype="<f4")
    for i, sid in enumerate(ds.source_ids):
        parts.append(_pack_id(sid))
        parts.append(struct.pack("<4d", ds.timestamps[i], ds.positions[i, 0],
                                 ds.positions[i, 1], ds.z[i]))
        parts.append(desc[i].tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_descriptor_set(path) -> DescriptorSet:
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4) != DESCRIPTOR_MAGIC:
        raise FormatError(f"{path}: not a descriptor-set file")
    version, dim, count, role = r.unpack("<IIIB")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported descriptor-set version {version}")
    ids, meta, rows = [], [], []
    for _ in range(count):
        ids.append(r.ident())
        meta.append(r.unpack("<4d"))
        rows.append(np.frombuffer(r.take(4 * dim), dtype="<f4"))
    meta = np.array(meta, dtype=np.float64).reshape(count, 4)
    desc = np.array(rows, dtype=np.float64).reshape(count, dim)
    return DescriptorSet(ids, desc, meta[:, 1:3], meta[:, 0], meta[:, 3], _ROLES[role])
