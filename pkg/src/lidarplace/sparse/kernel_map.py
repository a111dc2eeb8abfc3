"""Kernel maps: per-offset (input row, output row) pairings for sparse convolution."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from .tensor import SparseTensor, wrap_coords


def kernel_offsets(k: int) -> np.ndarray:
    """All ``k**3`` offsets in lexicographic order.

    Odd ``k`` is centred on zero; even ``k`` spans ``0 .. k-1`` (the
    fan-out pattern of a generative transposed convolution).
    """
    if k < 1:
        raise ParameterError(f"kernel size must be >= 1, got {k}")
    r = range(-(k // 2), k // 2 + 1) if k % 2 else range(k)
    return np.array(list(itertools.product(r, r, r)), dtype=np.int64)


def downsample_coords(coords: np.ndarray, out_stride) -> np.ndarray:
    s = np.asarray(out_stride, dtype=np.int64)
    down = np.floor_divide(coords, s) * s
    return np.unique(down, axis=0) if len(down) else down.reshape(0, 3)


@dataclass(frozen=True, eq=False)
class KernelMap:
    kernel_size: int
    offsets: np.ndarray
    in_rows: tuple
    out_rows: tuple
    out_coords: np.ndarray
    in_stride: tuple
    out_stride: tuple

    @property
    def volume(self) -> int:
        return len(self.offsets)

    def pairs(self, i: int) -> list[tuple[int, int]]:
        return list(zip(self.in_rows[i].tolist(), self.out_rows[i].tolist()))

    def pair_count(self) -> int:
        return sum(len(r) for r in self.in_rows)


def build_kernel_map(tensor: SparseTensor, k: int, s: int = 1,
                     out_coords: np.ndarray | None = None) -> KernelMap:
    """Pair input and output rows for every kernel offset.

    Output coordinates are the input set for ``s == 1`` and the floored set
    ``floor(c / (t * s)) * (t * s)`` otherwise, ``t`` being the input
    stride. A pair ``(i, j)`` is listed under offset ``d`` when
    ``coords[i] == out[j] + d * t`` (folded on periodic axes).
    ``out_coords`` overrides the derived output set.
    """
    if s < 1:
        raise ParameterError(f"stride must be >= 1, got {s}")
    t = np.asarray(tensor.stride, dtype=np.int64)
    out_stride = tuple(int(v) for v in t * s)
    if out_coords is None:
        out_coords = tensor.coords if s == 1 else downsample_coords(tensor.coords, out_stride)
    out_coords = np.asarray(out_coords, dtype=np.int64).reshape(-1, 3)
    offsets = kernel_offsets(k)
    in_rows, out_rows = [], []
    all_out = np.arange(len(out_coords))
    for d in offsets:
        q = wrap_coords(out_coords + d * t, tensor.stride, tensor.periods)
        rows = tensor.index.query(q)
        hit = rows >= 0
        in_rows.append(rows[hit])
        out_rows.append(all_out[hit])
    return KernelMap(k, offsets, tuple(in_rows), tuple(out_rows), out_coords,
                     tuple(tensor.stride), out_stride)
