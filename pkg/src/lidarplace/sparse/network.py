"""Declarative sparse U-Net graphs and their forward pass."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from ..cloud import PointCloud
from ..errors import LidarPlaceError, ParameterError, ShapeError
from . import ops
from .kernel_map import build_kernel_map
from .ops import Descriptor
from .tensor import QuantizationSpec, SparseTensor, quantize


@dataclass(frozen=True)
class SparseConv:
    k: int
    in_dim: int
    out_dim: int
    stride: int = 1
    bias: bool = True


@dataclass(frozen=True)
class TransposedSparseConv:
    k: int
    in_dim: int
    out_dim: int
    stride: int
    target: int  # index of the encoder layer whose coordinates are restored
    bias: bool = True


@dataclass(frozen=True)
class Skip:
    source: int


@dataclass(frozen=True)
class Nonlinearity:
    kind: str = "relu"


@dataclass(frozen=True)
class Normalization:
    dim: int
    kind: str = "layer"  # "layer" (per-voxel) or "affine" (folded batch norm)


@dataclass(frozen=True)
class GlobalPool:
    kind: str = "gem"
    p: float = 3.0
    normalize: bool = True


Layer = Union[SparseConv, TransposedSparseConv, Skip, Nonlinearity, Normalization, GlobalPool]
LAYER_TYPES = {cls.__name__: cls for cls in
               (SparseConv, TransposedSparseConv, Skip, Nonlinearity, Normalization, GlobalPool)}


def layer_to_dict(layer: Layer) -> dict:
    return {"type": type(layer).__name__, **asdict(layer)}


def layer_from_dict(d: dict) -> Layer:
    d = dict(d)
    try:
        cls = LAYER_TYPES[d.pop("type")]
    except KeyError as exc:
        raise ParameterError(f"unknown layer type {exc}") from None
    return cls(**d)


def param_shapes(layer: Layer) -> dict[str, tuple]:
    if isinstance(layer, (SparseConv, TransposedSparseConv)):
        shapes = {"kernel": (layer.k ** 3, layer.out_dim, layer.in_dim)}
        if layer.bias:
            shapes["bias"] = (layer.out_dim,)
        return shapes
    if isinstance(layer, Normalization):
        return {"gamma": (layer.dim,), "beta": (layer.dim,)}
    return {}


@dataclass(eq=False)
class LayerGraph:
    layers: list
    in_dim: int = 1
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layers = list(self.layers)
        self.out_dim, self._strides = self._validate()
        for i, layer in enumerate(self.layers):
            have = self.weights.get(i, {})
            for name, shape in param_shapes(layer).items():
                if name in have and tuple(np.shape(have[name])) != shape:
                    raise ShapeError(
                        f"layer {i} {name}: expected shape {shape}, got {np.shape(have[name])}")

    def _validate(self):
        dims, strides = [], []
        dim, stride, conv_strides = self.in_dim, 1, set()
        for i, layer in enumerate(self.layers):
            if isinstance(layer, GlobalPool):
                if i != len(self.layers) - 1:
                    raise ParameterError("GlobalPool must be the last layer")
            elif isinstance(layer, (SparseConv, TransposedSparseConv)):
                if layer.in_dim != dim:
                    raise ShapeError(f"layer {i} expects {layer.in_dim} channels, gets {dim}")
                if layer.k < 1 or layer.stride < 1:
                    raise ParameterError(f"layer {i}: bad kernel size or stride")
                if isinstance(layer, SparseConv):
                    if layer.k % 2 == 0:
                        raise ParameterError(f"layer {i}: convolution kernel size must be odd")
                    conv_strides.add(layer.stride)
                    stride *= layer.stride
                else:
                    if layer.stride not in conv_strides:
                        raise ParameterError(
                            f"layer {i}: transposed stride {layer.stride} has no matching encoder stride")
                    if stride % layer.stride:
                        raise ParameterError(f"layer {i}: cannot upsample stride {stride} by {layer.stride}")
                    stride //= layer.stride
                    if not 0 <= layer.target < i or strides[layer.target] != stride:
                        raise ParameterError(
                            f"layer {i}: target layer {layer.target} is not an earlier layer at stride {stride}")
                dim = layer.out_dim
            elif isinstance(layer, Skip):
                if not 0 <= layer.source < i:
                    raise ParameterError(f"layer {i}: skip source {layer.source} does not precede it")
                if strides[layer.source] != stride:
                    raise ParameterError(f"layer {i}: skip source {layer.source} is at another stride")
                dim += dims[layer.source]
            elif isinstance(layer, Normalization):
                if layer.dim != dim:
                    raise ShapeError(f"layer {i} normalises {layer.dim} channels, gets {dim}")
                if layer.kind not in ("layer", "affine"):
                    raise ParameterError(f"layer {i}: unknown normalization {layer.kind!r}")
            elif isinstance(layer, Nonlinearity):
                if layer.kind not in ("relu", "leaky_relu"):
                    raise ParameterError(f"layer {i}: unknown nonlinearity {layer.kind!r}")
            else:
                raise ParameterError(f"layer {i}: unsupported layer {layer!r}")
            dims.append(dim)
            strides.append(stride)
        if not self.layers or not isinstance(self.layers[-1], GlobalPool):
            raise ParameterError("graph must end with exactly one GlobalPool")
        if stride != 1:
            raise ParameterError(f"graph ends at stride {stride}; the decoder must return to stride 1")
        return dim, strides

    def has_all_weights(self) -> bool:
        return all(name in self.weights.get(i, {})
                   for i, layer in enumerate(self.layers) for name in param_shapes(layer))

    def with_random_weights(self, seed: int = 0) -> "LayerGraph":
        """Fill every parameter deterministically; kernels ~ N(0, 1) / sqrt(in_dim * k**3)."""
        weights = {}
        for i, layer in enumerate(self.layers):
            rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
            p = {}
            if isinstance(layer, (SparseConv, TransposedSparseConv)):
                vol = layer.k ** 3
                p["kernel"] = rng.standard_normal((vol, layer.out_dim, layer.in_dim)) / np.sqrt(
                    layer.in_dim * vol)
                if layer.bias:
                    p["bias"] = np.zeros(layer.out_dim)
            elif isinstance(layer, Normalization):
                p["gamma"] = np.ones(layer.dim)
                p["beta"] = np.zeros(layer.dim)
            if p:
                weights[i] = p
        return LayerGraph(self.layers, self.in_dim, weights)


def default_graph(in_dim: int = 1, widths=(16, 32, 64), descriptor_dim: int = 64, k: int = 3,
                  pool: str = "gem", p: float = 3.0, normalize: bool = True,
                  norm: str = "affine") -> LayerGraph:
    """Encoder levels at strides 1, 2, 4, ... with a mirrored decoder and skips."""
    layers: list = []
    level_out = []
    dim = in_dim

    def block(conv):
        layers.append(conv)
        layers.append(Normalization(conv.out_dim, norm))
        layers.append(Nonlinearity("relu"))
        return len(layers) - 1

    for lvl, w in enumerate(widths):
        level_out.append(block(SparseConv(k, dim, w, 1 if lvl == 0 else 2)))
        dim = w
    for lvl in range(len(widths) - 2, -1, -1):
        w = widths[lvl]
        block(TransposedSparseConv(2, dim, w, 2, target=level_out[lvl]))
        layers.append(Skip(level_out[lvl]))
        last = lvl == 0
        out = descriptor_dim if last else w
        if last:
            layers.append(SparseConv(k, 2 * w, out, 1))
        else:
            block(SparseConv(k, 2 * w, out, 1))
        dim = out
    if len(widths) == 1:
        layers.append(SparseConv(k, dim, descriptor_dim, 1))
    layers.append(GlobalPool(pool, p, normalize))
    return LayerGraph(layers, in_dim)


def run_layers(x: SparseTensor, graph: LayerGraph, keep_outputs: bool = False):
    """Execute every layer; returns the pooled descriptor (and per-layer outputs)."""
    if not graph.has_all_weights():
        raise ParameterError("graph has missing weights; load a weight file or seed them")
    if x.dim != graph.in_dim:
        raise ShapeError(f"graph expects {graph.in_dim} input channels, tensor has {x.dim}")
    outputs: list = []
    kmaps: dict = {}
    for i, layer in enumerate(graph.layers):
        w = graph.weights.get(i, {})
        try:
            if isinstance(layer, SparseConv):
                key = (id(x.coords), layer.k, layer.stride)
                if key not in kmaps:
                    kmaps[key] = (x.coords, build_kernel_map(x, layer.k, layer.stride))
                x = ops.sparse_conv(x, w["kernel"], kmaps[key][1], w.get("bias"))
            elif isinstance(layer, TransposedSparseConv):
                x = ops.transposed_sparse_conv(x, w["kernel"], outputs[layer.target],
                                               layer.k, layer.stride, w.get("bias"))
            elif isinstance(layer, Skip):
                x = ops.skip_concat(x, outputs[layer.source])
            elif isinstance(layer, Nonlinearity):
                x = ops.relu(x) if layer.kind == "relu" else ops.leaky_relu(x)
            elif isinstance(layer, Normalization):
                if layer.kind == "layer":
                    x = ops.layer_norm(x, w["gamma"], w["beta"])
                else:
                    x = ops.affine(x, w["gamma"], w["beta"])
            elif isinstance(layer, GlobalPool):
                x = ops.global_pool(x, layer.kind, layer.p, layer.normalize)
        except LidarPlaceError as exc:
            if exc.layer_index is None:
                exc.layer_index = i
                exc.args = (f"layer {i} ({type(layer).__name__}): {exc}",)
            raise
        outputs.append(x)
    return (x, outputs) if keep_outputs else x


def forward(cloud: PointCloud, graph: LayerGraph, spec: QuantizationSpec,
            feature_mode: str = "ones") -> Descriptor:
    """Quantize a cloud and run it through ``graph`` to a global descriptor."""
    return run_layers(quantize(cloud, spec, feature_mode), graph)
