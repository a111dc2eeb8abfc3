"""Generalized sparse convolution and the other layer primitives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CoordinateError, EmptyError, ParameterError, ShapeError
from .kernel_map import KernelMap, build_kernel_map
from .tensor import SparseTensor


@dataclass(frozen=True, eq=False)
class Descriptor:
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


def _check_weights(weights: np.ndarray, volume: int, in_dim: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 3 or w.shape[0] != volume:
        raise ShapeError(f"expected {volume} kernel matrices, got weights of shape {w.shape}")
    if w.shape[2] != in_dim:
        raise ShapeError(f"weights take {w.shape[2]} input channels, tensor has {in_dim}")
    return w


def _add_bias(out: np.ndarray, bias) -> np.ndarray:
    if bias is not None:
        b = np.asarray(bias, dtype=np.float64).reshape(-1)
        if len(b) != out.shape[1]:
            raise ShapeError(f"bias has {len(b)} entries for {out.shape[1]} channels")
        out += b
    return out


def sparse_conv(x: SparseTensor, weights: np.ndarray, kmap: KernelMap, bias=None) -> SparseTensor:
    """``out[u] = sum_d W_d @ x[v]`` over every mapped pair ``(v, u)`` of offset ``d``.

    ``weights`` has shape ``(k**3, out_dim, in_dim)`` in the map's offset order.
    """
    w = _check_weights(weights, kmap.volume, x.dim)
    if tuple(kmap.in_stride) != tuple(x.stride):
        raise ShapeError(f"kernel map built for stride {kmap.in_stride}, tensor has {x.stride}")
    out = np.zeros((len(kmap.out_coords), w.shape[1]))
    for d in range(kmap.volume):
        rows_in, rows_out = kmap.in_rows[d], kmap.out_rows[d]
        if len(rows_in):
            # each output row appears at most once per offset
            out[rows_out] += x.feats[rows_in] @ w[d].T
    _add_bias(out, bias)
    if kmap.out_coords is x.coords:
        return x.with_feats(out)
    return SparseTensor(kmap.out_coords, out, kmap.out_stride, x.periods)


def conv(x: SparseTensor, weights, k: int, s: int = 1, bias=None) -> SparseTensor:
    return sparse_conv(x, weights, build_kernel_map(x, k, s), bias)


def transposed_sparse_conv(x: SparseTensor, weights: np.ndarray, target: SparseTensor,
                           k: int, s: int, bias=None) -> SparseTensor:
    """Scatter coarse rows of ``x`` onto the finer coordinate set of ``target``.

    Fine row ``u`` receives ``W_d @ x[v]`` whenever ``u == v + d * t`` with
    ``t`` the target stride. Using the same map as the strided convolution
    from ``target`` makes this its exact adjoint when ``W_d`` is transposed.
    """
    t = np.asarray(target.stride, dtype=np.int64)
    if tuple(int(v) for v in t * s) != tuple(x.stride):
        raise ShapeError(
            f"coarse stride {x.stride} is not target stride {target.stride} x {s}")
    kmap = build_kernel_map(target, k, s)
    rows = x.index.query(kmap.out_coords)
    covered = np.zeros(len(x), dtype=bool)
    covered[rows[rows >= 0]] = True
    if not covered.all():
        witness = tuple(int(v) for v in x.coords[np.flatnonzero(~covered)[0]])
        raise CoordinateError(
            f"target set does not cover the upsampled support; e.g. coarse voxel {witness}")
    w = _check_weights(weights, kmap.volume, x.dim)
    out = np.zeros((len(target), w.shape[1]))
    for d in range(kmap.volume):
        fine, coarse = kmap.in_rows[d], rows[kmap.out_rows[d]]
        keep = coarse >= 0
        if keep.any():
            out[fine[keep]] += x.feats[coarse[keep]] @ w[d].T
    _add_bias(out, bias)
    return target.with_feats(out)


def skip_concat(decoder: SparseTensor, encoder: SparseTensor) -> SparseTensor:
    """Concatenate per-voxel features (decoder channels first) in decoder row order."""
    if tuple(decoder.stride) != tuple(encoder.stride):
        raise CoordinateError(f"stride mismatch {decoder.stride} vs {encoder.stride}")
    rows = encoder.index.query(decoder.coords)
    if (rows < 0).any():
        w = tuple(int(v) for v in decoder.coords[np.flatnonzero(rows < 0)[0]])
        raise CoordinateError(f"encoder lacks voxel {w}")
    if len(encoder) != len(decoder):
        extra = encoder.coord_set() - decoder.coord_set()
        raise CoordinateError(f"decoder lacks voxel {min(extra)}")
    return decoder.with_feats(np.hstack([decoder.feats, encoder.feats[rows]]))


def relu(x: SparseTensor) -> SparseTensor:
    return x.with_feats(np.maximum(x.feats, 0.0))


def leaky_relu(x: SparseTensor, slope: float = 0.01) -> SparseTensor:
    return x.with_feats(np.where(x.feats > 0, x.feats, slope * x.feats))


def layer_norm(x: SparseTensor, gamma=None, beta=None, eps: float = 1e-5) -> SparseTensor:
    """Normalise each voxel's feature vector across channels."""
    f = x.feats
    mu = f.mean(axis=1, keepdims=True)
    var = f.var(axis=1, keepdims=True)
    out = (f - mu) / np.sqrt(var + eps)
    return affine(x.with_feats(out), gamma, beta)


def affine(x: SparseTensor, gamma=None, beta=None) -> SparseTensor:
    """Per-channel scale and shift; inference-mode batch norm folds into this."""
    f = x.feats
    if gamma is not None:
        f = f * np.asarray(gamma, dtype=np.float64).reshape(1, -1)
    if beta is not None:
        f = f + np.asarray(beta, dtype=np.float64).reshape(1, -1)
    return x.with_feats(f)


def global_pool(x: SparseTensor, kind: str = "gem", p: float = 3.0,
                normalize: bool = True) -> Descriptor:
    """Collapse all voxels into one vector per channel.

    ``gem`` is the generalized mean ``(sum f**p / n) ** (1/p)`` over features
    clamped at zero; ``p == 1`` reduces to plain mean pooling.
    """
    if len(x) == 0:
        raise EmptyError("cannot pool an empty tensor")
    f = x.feats
    if kind == "mean":
        v = f.mean(axis=0)
    elif kind == "max":
        v = f.max(axis=0)
    elif kind == "gem":
        if not p >= 1:
            raise ParameterError(f"GeM power must be >= 1, got {p}")
        f = np.maximum(f, 0.0)
        v = f.mean(axis=0) if p == 1 else np.power(np.power(f, p).mean(axis=0), 1.0 / p)
    else:
        raise ParameterError(f"unknown pooling kind {kind!r}")
    if normalize:
        n = np.linalg.norm(v)
        if n > 0:
            return Descriptor(v / n, True)
    return Descriptor(v, False)
