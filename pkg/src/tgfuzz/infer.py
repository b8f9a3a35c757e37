"""Shape and dtype inference over a model graph.

Spatial formulas (shared by every backend):
  valid padding: out = floor((in - k_eff) / stride) + 1, k_eff = (k-1)*dilation + 1
  same padding:  out = ceil(in / stride)
An InferenceFailure marks an invalid mutant (e.g. kernel larger than the
spatial extent under valid padding) that the campaign silently discards.
"""

from __future__ import annotations

import math

from .graph import MAX_ELEMENTS, GraphError, LayerNode, ModelGraph, TensorSpec
from .registry import Registry


class InferenceFailure(ValueError):
    def __init__(self, node_id: str, detail: str):
        super().__init__(f"{node_id}: {detail}")
        self.node_id = node_id
        self.detail = detail


def conv_out_extent(extent: int, kernel: int, stride: int, dilation: int,
                    padding: str) -> int:
    k_eff = (kernel - 1) * dilation + 1
    if padding == "same":
        return math.ceil(extent / stride)
    out = (extent - k_eff) // stride + 1
    if out < 1:
        raise ValueError(f"kernel {k_eff} exceeds extent {extent} under valid padding")
    return out


def _norm_axis(axis: int, rank: int, node_id: str) -> int:
    if not (-rank <= axis < rank):
        raise InferenceFailure(node_id, f"axis {axis} out of range for rank {rank}")
    return axis % rank


def _spatial(node: LayerNode, shape: tuple[int, ...], ndims: int) -> tuple[int, ...]:
    p = node.params
    try:
        outs = tuple(
            conv_out_extent(shape[1 + i], p["kernel_size"], p["strides"],
                            p["dilation_rate"], p["padding"])
            for i in range(ndims)
        )
    except ValueError as e:
        raise InferenceFailure(node.id, str(e)) from None
    return outs


def infer_node_shape(node: LayerNode, in_specs: list[TensorSpec]) -> tuple[int, ...]:
    kind = node.kind
    p = node.params
    s = in_specs[0].shape

    if kind == "Dense":
        return s[:-1] + (p["units"],)
    if kind == "Conv1D":
        if len(s) != 3:
            raise InferenceFailure(node.id, f"needs rank 3, got {len(s)}")
        return (s[0],) + _spatial(node, s, 1) + (p["filters"],)
    if kind in ("Conv2D", "SeparableConv2D"):
        if len(s) != 4:
            raise InferenceFailure(node.id, f"needs rank 4, got {len(s)}")
        return (s[0],) + _spatial(node, s, 2) + (p["filters"],)
    if kind in ("MaxPooling2D", "AveragePooling2D"):
        if len(s) != 4:
            raise InferenceFailure(node.id, f"needs rank 4, got {len(s)}")
        try:
            oh = conv_out_extent(s[1], p["pool_size"], p["strides"], 1, p["padding"])
            ow = conv_out_extent(s[2], p["pool_size"], p["strides"], 1, p["padding"])
        except ValueError as e:
            raise InferenceFailure(node.id, str(e)) from None
        return (s[0], oh, ow, s[3])
    if kind == "GlobalAveragePooling2D":
        if len(s) != 4:
            raise InferenceFailure(node.id, f"needs rank 4, got {len(s)}")
        return (s[0], 1, 1, s[3]) if p.get("keepdims") else (s[0], s[3])
    if kind in ("BatchNormalization", "LayerNormalization", "ReLU", "LeakyReLU",
                "ELU", "Dropout", "Cast"):
        return s
    if kind == "Softmax":
        _norm_axis(p["axis"], len(s), node.id)
        return s
    if kind == "Flatten":
        n = 1
        for e in s[1:]:
            n *= e
        return (s[0], n)
    if kind in ("Add", "Multiply"):
        return s
    if kind == "Concatenate":
        ax = _norm_axis(p["axis"], len(s), node.id)
        if ax == 0:
            raise InferenceFailure(node.id, "cannot concatenate along batch axis")
        total = sum(spec.shape[ax] for spec in in_specs)
        return s[:ax] + (total,) + s[ax + 1:]
    if kind == "Reshape":
        target = tuple(int(e) for e in p["target_shape"])
        if math.prod(target) != in_specs[0].elements:
            raise InferenceFailure(
                node.id, f"reshape {s} -> {target} changes element count")
        return target
    if kind == "Pad":
        pads = p["padding"]
        if len(pads) != len(s):
            raise InferenceFailure(node.id, "padding spec rank mismatch")
        return tuple(e + int(b) + int(a) for e, (b, a) in zip(s, pads))
    if kind == "Crop":
        crops = p["cropping"]
        if len(crops) != len(s):
            raise InferenceFailure(node.id, "cropping spec rank mismatch")
        out = tuple(e - int(b) - int(a) for e, (b, a) in zip(s, crops))
        if any(e < 0 for e in out):
            raise InferenceFailure(node.id, f"crop below zero: {s} -> {out}")
        return out
    raise InferenceFailure(node.id, f"no inference rule for kind {kind!r}")


def infer_specs(graph: ModelGraph, registry: Registry) -> ModelGraph:
    """Return a copy of the graph with every node's output spec filled.

    Deterministic and total on structurally sound graphs except for the
    declared failure cases, which raise InferenceFailure.
    """
    g = graph.copy()
    g.specs = {}
    try:
        order = g.topo_order()
    except GraphError as e:
        raise InferenceFailure("", str(e)) from None
    for nid in order:
        node = g.nodes[nid]
        registry.schema(node.kind)  # unknown kinds fail fast
        if not node.inputs:
            raise InferenceFailure(nid, "node has no inputs")
        in_specs = [g.spec_of(src) for src, _ in node.inputs]
        shape = infer_node_shape(node, in_specs)
        spec = TensorSpec(dtype=node.dtype, shape=shape)
        if spec.elements > MAX_ELEMENTS:
            raise InferenceFailure(nid, f"tensor too large: {shape}")
        g.specs[nid] = spec
    return g
