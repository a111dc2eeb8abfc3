"""Sparse voxel tensors and a generalized sparse-convolution U-Net."""

from .kernel_map import KernelMap, build_kernel_map, kernel_offsets
from .network import (GlobalPool, LayerGraph, Nonlinearity, Normalization, Skip, SparseConv,
                      TransposedSparseConv, default_graph, forward, run_layers)
from .ops import (Descriptor, conv, global_pool, skip_concat, sparse_conv,
                  transposed_sparse_conv)
from .tensor import CoordinateIndex, QuantizationSpec, SparseTensor, quantize
from .weights import load_weights, save_weights

__all__ = [
    "CoordinateIndex", "Descriptor", "GlobalPool", "KernelMap", "LayerGraph", "Nonlinearity",
    "Normalization", "QuantizationSpec", "Skip", "SparseConv", "SparseTensor",
    "TransposedSparseConv", "build_kernel_map", "conv", "default_graph", "forward",
    "global_pool", "kernel_offsets", "load_weights", "quantize", "run_layers", "save_weights",
    "skip_concat", "sparse_conv", "transposed_sparse_conv",
]
