"""Weight file: self-describing container for a LayerGraph and its parameters.

Layout::

    b"LPWT"  magic
    uint32   format version
    uint32   header length H
    H bytes  UTF-8 JSON header: in_dim, layer list, tensor table
    payload  float32 little-endian tensors at the offsets listed in the header
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .network import LayerGraph, layer_from_dict, layer_to_dict, param_shapes

MAGIC = b"LPWT"
FORMAT_VERSION = 1
_F32 = np.dtype("<f4")


def save_weights(graph: LayerGraph, path) -> None:
    table, chunks, offset = [], [], 0
    for i, layer in enumerate(graph.layers):
        for name in param_shapes(layer):
            arr = np.asarray(graph.weights[i][name], dtype=_F32)
            table.append({"layer": i, "name": name, "shape": list(arr.shape),
                          "offset": offset, "count": int(arr.size)})
            chunks.append(arr.tobytes())
            offset += arr.nbytes
    header = json.dumps({"in_dim": graph.in_dim,
                         "layers": [layer_to_dict(l) for l in graph.layers],
                         "tensors": table}, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC + struct.pack("<II", FORMAT_VERSION, len(header)) + header)
        for c in chunks:
            fh.write(c)


def load_weights(path) -> LayerGraph:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC or len(raw) < 12:
        raise FormatError(f"{path}: not a weight file")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported weight format version {version}")
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header: {exc}") from None
    payload = raw[12 + hlen:]
    weights: dict = {}
    for t in header["tensors"]:
        end = t["offset"] + 4 * t["count"]
        if end > len(payload):
            raise FormatError(f"{path}: payload truncated at layer {t['layer']} {t['name']}")
        arr = np.frombuffer(payload, dtype=_F32, count=t["count"], offset=t["offset"])
        weights.setdefault(t["layer"], {})[t["name"]] = arr.astype(np.float64).reshape(t["shape"])
    layers = [layer_from_dict(d) for d in header["layers"]]
    return LayerGraph(layers, header["in_dim"], weights)
