"""Sparse tensors: unique integer voxel coordinates paired with feature rows."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..cloud import Frame, PointCloud, _grouped_mean
from ..errors import (CoordinateError, DataError, EmptyCloudError, FrameError,
                      ParameterError, ShapeError)

_BITS = 21
_BIAS = 1 << (_BITS - 1)
_MASK = (1 << _BITS) - 1

Periods = tuple  # three entries, each None or a positive int (period at unit stride)
NO_WRAP: Periods = (None, None, None)


def pack_coords(coords: np.ndarray) -> np.ndarray:
    """Pack ``(M, 3)`` integer coordinates into one sortable int64 key per row."""
    c = np.asarray(coords, dtype=np.int64)
    if c.size and (c.min() < -_BIAS or c.max() >= _BIAS):
        raise CoordinateError(f"voxel coordinate outside +/-{_BIAS}; use a coarser step")
    c = c + _BIAS
    return (c[:, 0] << (2 * _BITS)) | (c[:, 1] << _BITS) | c[:, 2]


def unpack_keys(keys: np.ndarray) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    return np.column_stack([(keys >> (2 * _BITS)) & _MASK, (keys >> _BITS) & _MASK,
                            keys & _MASK]) - _BIAS


class CoordinateIndex:
    """Hash-style lookup from coordinate to row index.

    Backed by sorted packed keys so a whole batch of neighbour queries
    resolves in one vectorised ``searchsorted``.
    """

    def __init__(self, coords: np.ndarray):
        keys = pack_coords(coords)
        self._order = np.argsort(keys, kind="stable")
        self._sorted = keys[self._order]
        if len(keys) > 1:
            dup = self._sorted[1:] == self._sorted[:-1]
            if dup.any():
                witness = unpack_keys(self._sorted[1:][dup][:1])[0]
                raise CoordinateError(f"duplicate coordinate {tuple(int(v) for v in witness)}")

    def __len__(self):
        return len(self._sorted)

    def query(self, coords: np.ndarray) -> np.ndarray:
        """Row index for each queried coordinate, ``-1`` where absent."""
        if len(self._sorted) == 0 or len(coords) == 0:
            return np.full(len(coords), -1, dtype=np.int64)
        keys = pack_coords(coords)
        pos = np.searchsorted(self._sorted, keys)
        pos_c = np.minimum(pos, len(self._sorted) - 1)
        hit = self._sorted[pos_c] == keys
        return np.where(hit, self._order[pos_c], -1)

    def row_of(self, coord) -> int | None:
        r = int(self.query(np.asarray([coord]))[0])
        return None if r < 0 else r


def wrap_coords(coords: np.ndarray, stride, periods: Periods) -> np.ndarray:
    """Fold coordinates on periodic axes into ``[0, ceil(P / t) * t)``."""
    if all(p is None for p in periods):
        return coords
    out = np.array(coords, dtype=np.int64, copy=True)
    for ax, p in enumerate(periods):
        if p is not None:
            t = int(stride[ax])
            out[:, ax] = np.mod(out[:, ax], math.ceil(p / t) * t)
    return out


@dataclass(frozen=True, eq=False)
class SparseTensor:
    coords: np.ndarray
    feats: np.ndarray
    stride: tuple = (1, 1, 1)
    periods: Periods = NO_WRAP
    _index: CoordinateIndex | None = field(default=None, repr=False)

    def __post_init__(self):
        c = np.ascontiguousarray(self.coords, dtype=np.int64).reshape(-1, 3)
        f = np.ascontiguousarray(self.feats, dtype=np.float64)
        if f.ndim == 1:
            f = f[:, None]
        if len(c) != len(f):
            raise ShapeError(f"{len(c)} coordinates but {len(f)} feature rows")
        if not np.isfinite(f).all():
            raise DataError("sparse tensor features must be finite")
        stride = tuple(int(s) for s in self.stride)
        if len(stride) != 3 or min(stride) < 1:
            raise ShapeError(f"bad stride {self.stride}")
        c.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "feats", f)
        object.__setattr__(self, "stride", stride)
        object.__setattr__(self, "periods", tuple(self.periods))
        if self._index is None:
            object.__setattr__(self, "_index", CoordinateIndex(c))

    def __len__(self):
        return len(self.coords)

    @property
    def dim(self) -> int:
        return self.feats.shape[1]

    @property
    def index(self) -> CoordinateIndex:
        return self._index

    def with_feats(self, feats: np.ndarray) -> "SparseTensor":
        """Same coordinates and lookup table, new features."""
        return SparseTensor(self.coords, feats, self.stride, self.periods, self._index)

    def coord_set(self) -> set:
        return set(map(tuple, self.coords.tolist()))


@dataclass(frozen=True)
class QuantizationSpec:
    """Per-axis voxel steps.

    Cartesian mode takes metres for ``x, y, z``; spherical mode takes
    ``(r metres, theta degrees, phi degrees)`` in that axis order.
    With ``wrap_theta`` the azimuth axis is periodic with
    ``ceil(360 / theta_step)`` bins, so neighbourhoods cross the +/-180 seam.
    """

    steps: tuple = (0.1, 0.1, 0.1)
    mode: Frame = Frame.CARTESIAN
    wrap_theta: bool = False

    def __post_init__(self):
        steps = self.steps
        if np.isscalar(steps):
            steps = (steps,) * 3
        steps = tuple(float(s) for s in steps)
        if len(steps) == 1:
            steps = steps * 3
        if len(steps) != 3 or not all(s > 0 and math.isfinite(s) for s in steps):
            raise ParameterError(f"quantization steps must be three positive reals, got {self.steps}")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "mode", Frame(self.mode))
        if self.wrap_theta and self.mode is not Frame.SPHERICAL:
            raise ParameterError("theta wraparound only applies to spherical quantization")

    @property
    def periods(self) -> Periods:
        if not self.wrap_theta:
            return NO_WRAP
        return (None, math.ceil(360.0 / self.steps[1]), None)


def quantize(cloud: PointCloud, spec: QuantizationSpec, feature_mode: str = "ones") -> SparseTensor:
    """Voxelise a cloud; points sharing a voxel are merged by mean feature.

    Output rows are in lexicographic coordinate order and the reduction is
    order-canonical, so any permutation of the input points gives a
    bit-identical tensor.
    """
    if cloud.frame is not spec.mode:
        raise FrameError(
            f"{spec.mode.value} quantization needs a {spec.mode.value} cloud, got {cloud.frame.value}")
    if len(cloud) == 0:
        raise EmptyCloudError(f"cloud {cloud.source_id!r} has no points")
    if feature_mode == "ones":
        feats = np.ones((len(cloud), 1))
    elif feature_mode == "intensity":
        if cloud.intensity is None:
            raise DataError(f"cloud {cloud.source_id!r} has no intensity channel")
        feats = cloud.intensity[:, None]
    else:
        raise ParameterError(f"unknown feature mode {feature_mode!r}")
    coords = np.floor(cloud.points / np.asarray(spec.steps)).astype(np.int64)
    periods = spec.periods
    coords = wrap_coords(coords, (1, 1, 1), periods)
    voxels, means = _grouped_mean(coords, feats)
    return SparseTensor(voxels, means, (1, 1, 1), periods)
