"""Point cloud container, on-disk readers and geometric pre-filters."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DataError, EmptyCloudError, FormatError, FrameError, ParameterError

XYZI_RECORD = np.dtype("<f4")
XYZI_RECORD_BYTES = 16


class Frame(str, enum.Enum):
    CARTESIAN = "cartesian"
    SPHERICAL = "spherical"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered points with optional per-point intensity.

    ``points`` is ``(N, 3)``: ``(x, y, z)`` metres for the Cartesian frame,
    ``(r metres, theta degrees, phi degrees)`` for the spherical frame.
    Arrays are stored read-only so clouds can be shared between workers.
    An empty cloud is a valid value, but every operation rejects it.
    """

    points: np.ndarray
    intensity: np.ndarray | None = None
    frame: Frame = Frame.CARTESIAN
    source_id: str = ""
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise FormatError(f"points must have shape (N, 3), got {pts.shape}")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "frame", Frame(self.frame))
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
            if len(inten) != len(pts):
                raise DataError(
                    f"intensity has {len(inten)} values for {len(pts)} points")
            object.__setattr__(self, "intensity", _frozen(inten))
        object.__setattr__(self, "metadata", dict(self.metadata))
        if self.frame is Frame.SPHERICAL and len(pts):
            r, theta, phi = pts.T
            bad = (r < 0) | (theta <= -180.0) | (theta > 180.0) | (phi < 0.0) | (phi > 180.0)
            if np.any(bad):
                i = int(np.flatnonzero(bad)[0])
                raise DataError(f"spherical point {i} out of range: {tuple(pts[i])}")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_intensity(self) -> bool:
        return self.intensity is not None

    def replace(self, **changes) -> "PointCloud":
        kw = dict(points=self.points, intensity=self.intensity, frame=self.frame,
                  source_id=self.source_id, metadata=self.metadata)
        kw.update(changes)
        return PointCloud(**kw)

    def require_nonempty(self) -> "PointCloud":
        if len(self.points) == 0:
            raise EmptyCloudError(f"cloud {self.source_id!r} has no points")
        return self


@dataclass(frozen=True)
class Pose:
    source_id: str
    x: float
    y: float
    z: float | None = None
    timestamp: float = 0.0

    def __post_init__(self):
        comps = [self.x, self.y] + ([self.z] if self.z is not None else [])
        if not all(math.isfinite(c) for c in comps):
            raise DataError(f"pose {self.source_id!r} has non-finite position")

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


def _check_finite(points: np.ndarray, intensity: np.ndarray | None, what: str):
    ok = np.isfinite(points).all(axis=1)
    if intensity is not None:
        ok &= np.isfinite(intensity)
    if not ok.all():
        i = int(np.flatnonzero(~ok)[0])
        raise DataError(f"{what}: non-finite value at point index {i}")


def _unit_cube(points: np.ndarray) -> bool:
    # Oxford-style submaps may come pre-normalised to [-1, 1]; record which.
    return bool(len(points)) and bool(np.all(np.abs(points) <= 1.0))


def load_xyzi_binary(path) -> PointCloud:
    """Read KITTI-style ``.bin`` scans: little-endian float32 ``x, y, z, intensity`` records."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) % XYZI_RECORD_BYTES:
        raise FormatError(
            f"{path}: length {len(raw)} is not a multiple of {XYZI_RECORD_BYTES} bytes")
    if not raw:
        raise EmptyCloudError(f"{path}: file holds no points")
    rec = np.frombuffer(raw, dtype=XYZI_RECORD).reshape(-1, 4)
    pts, inten = rec[:, :3].astype(np.float64), rec[:, 3].astype(np.float64)
    _check_finite(pts, inten, str(path))
    return PointCloud(pts, inten, Frame.CARTESIAN, source_id=path.stem,
                      metadata={"unit_cube": _unit_cube(pts)})


def save_xyzi_binary(cloud: PointCloud, path) -> None:
    if cloud.frame is not Frame.CARTESIAN:
        raise FrameError("xyzi files hold Cartesian points only")
    inten = cloud.intensity if cloud.intensity is not None else np.zeros(len(cloud))
    rec = np.column_stack([cloud.points, inten]).astype(XYZI_RECORD)
    Path(path).write_bytes(rec.tobytes())


DEFAULT_COLUMNS = {"x": "x", "y": "y", "z": "z", "intensity": "intensity"}


def load_csv_cloud(path, columns: Mapping[str, str] | None = None) -> PointCloud:
    """Read a UTF-8 CSV with a header row naming at least ``x,y,z``.

    ``columns`` maps the logical fields (``x``, ``y``, ``z``, ``intensity``)
    to header names. The intensity column is optional.
    """
    path = Path(path)
    spec = dict(DEFAULT_COLUMNS)
    if columns:
        spec.update(columns)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: missing header row") from None
        idx = {}
        for key in ("x", "y", "z"):
            if spec[key] not in header:
                raise FormatError(f"{path}: missing mandatory column {spec[key]!r}")
            idx[key] = header.index(spec[key])
        i_col = header.index(spec["intensity"]) if spec["intensity"] in header else None
        rows, inten = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(row[idx[k]]) for k in ("x", "y", "z")]
                iv = float(row[i_col]) if i_col is not None else 0.0
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}: line {line}: {exc}") from None
            if not all(math.isfinite(v) for v in vals + [iv]):
                raise DataError(f"{path}: line {line}: non-finite value")
            rows.append(vals)
            inten.append(iv)
    if not rows:
        raise EmptyCloudError(f"{path}: file holds no points")
    pts = np.array(rows, dtype=np.float64)
    return PointCloud(pts, np.array(inten) if i_col is not None else None,
                      Frame.CARTESIAN, source_id=path.stem,
                      metadata={"unit_cube": _unit_cube(pts)})


def load_poses(path) -> dict[str, Pose]:
    """Read a pose CSV with columns ``source_id,timestamp,x,y[,z]``."""
    path = Path(path)
    out: dict[str, Pose] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = {"source_id", "timestamp", "x", "y"} - set(fields)
        if missing:
            raise FormatError(f"{path}: missing pose columns {sorted(missing)}")
        has_z = "z" in fields
        for row in reader:
            try:
                z = float(row["z"]) if has_z and row["z"] not in ("", None) else None
                pose = Pose(row["source_id"], float(row["x"]), float(row["y"]), z,
                            float(row["timestamp"]))
            except (ValueError, TypeError) as exc:
                raise DataError(f"{path}: line {reader.line_num}: {exc}") from None
            if pose.source_id in out:
                raise DataError(f"{path}: duplicate source_id {pose.source_id!r}")
            out[pose.source_id] = pose
    return out


def save_poses(poses, path) -> None:
    """Write poses (a sequence, or the mapping ``load_poses`` returns) as CSV."""
    if isinstance(poses, Mapping):
        poses = poses.values()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["source_id", "timestamp", "x", "y", "z"])
        for p in poses:
            w.writerow([p.source_id, repr(p.timestamp), repr(p.x), repr(p.y),
                        "" if p.z is None else repr(p.z)])


def _require_cartesian(cloud: PointCloud, op: str):
    if cloud.frame is not Frame.CARTESIAN:
        raise FrameError(f"{op} expects a Cartesian cloud, got {cloud.frame.value}")


def range_filter(cloud: PointCloud, r_min: float, r_max: float) -> PointCloud:
    """Keep points with ``r_min <= |p| <= r_max``; both bounds inclusive."""
    _require_cartesian(cloud, "range_filter")
    cloud.require_nonempty()
    if not (0 <= r_min < r_max):
        raise ParameterError(f"need 0 <= r_min < r_max, got ({r_min}, {r_max})")
    r = np.sqrt(np.einsum("ij,ij->i", cloud.points, cloud.points))
    keep = (r >= r_min) & (r <= r_max)
    if not keep.any():
        raise EmptyCloudError(
            f"cloud {cloud.source_id!r}: no points within [{r_min}, {r_max}] m")
    if keep.all():
        return cloud
    return cloud.replace(
        points=cloud.points[keep],
        intensity=None if cloud.intensity is None else cloud.intensity[keep])


def _grouped_mean(keys: np.ndarray, values: np.ndarray):
    """Mean of ``values`` rows grouped by identical ``keys`` rows.

    Rows are sorted by key and then by value before summing, so the result
    is bit-identical for any permutation of the input. Groups come out in
    lexicographic key order.
    """
    order = np.lexsort(tuple(values.T[::-1]) + tuple(keys.T[::-1]))
    k, v = keys[order], values[order]
    starts = np.flatnonzero(np.r_[True, np.any(k[1:] != k[:-1], axis=1)])
    counts = np.diff(np.r_[starts, len(k)])
    sums = np.add.reduceat(v, starts, axis=0)
    return k[starts], sums / counts[:, None]


def voxel_downsample(cloud: PointCloud, voxel_size: float) -> PointCloud:
    """One averaged point (and intensity) per occupied ``floor(p / voxel_size)`` cell."""
    _require_cartesian(cloud, "voxel_downsample")
    cloud.require_nonempty()
    if not voxel_size > 0:
        raise ParameterError(f"voxel_size must be > 0, got {voxel_size}")
    keys = np.floor(cloud.points / voxel_size).astype(np.int64)
    vals = cloud.points if cloud.intensity is None else np.column_stack(
        [cloud.points, cloud.intensity])
    _, means = _grouped_mean(keys, vals)
    return cloud.replace(points=means[:, :3],
                         intensity=None if cloud.intensity is None else means[:, 3])
