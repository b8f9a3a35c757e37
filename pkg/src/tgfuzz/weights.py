"""Deterministic weight materialization.

Weights are a pure function of (weight_seed, node id, kind, params, input
specs): two graphs that agree on those fields get bit-identical weights,
which is what makes cross-backend output comparison meaningful.

Values are uniform in [-0.5, 0.5] except BatchNormalization's moving
variance, which is shifted to [0.25, 1.25] to keep 1/sqrt(var+eps) finite.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .dtypes import numpy_dtype
from .graph import ModelGraph, TensorSpec

# slot order per kind; the sidecar/bridge contract relies on it
WEIGHT_SLOTS = {
    "Dense": ("kernel", "bias"),
    "Conv1D": ("kernel", "bias"),
    "Conv2D": ("kernel", "bias"),
    "SeparableConv2D": ("depthwise_kernel", "pointwise_kernel", "bias"),
    "BatchNormalization": ("gamma", "beta", "moving_mean", "moving_variance"),
    "LayerNormalization": ("gamma", "beta"),
}


@dataclass(frozen=True)
class ValueTensor:
    spec: TensorSpec
    data: np.ndarray

    def __post_init__(self):
        if self.data.size != self.spec.elements:
            raise ValueError(
                f"payload length {self.data.size} != spec elements {self.spec.elements}")


def _node_rng(graph: ModelGraph, node_id: str) -> np.random.Generator:
    node = graph.nodes[node_id]
    in_specs = [graph.spec_of(src) for src, _ in node.inputs]
    ident = json.dumps(
        {
            "id": node.id,
            "kind": node.kind,
            "params": {k: node.params[k] for k in sorted(node.params)},
            "inputs": [[s.dtype, list(s.shape)] for s in in_specs],
        },
        sort_keys=True,
    )
    digest = hashlib.sha256(ident.encode()).digest()
    words = [int.from_bytes(digest[i: i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([graph.weight_seed & 0xFFFFFFFFFFFFFFFF, *words]))


def weight_shapes(graph: ModelGraph, node_id: str) -> list[tuple[str, tuple[int, ...]]]:
    """(slot name, shape) pairs for the node's weights, in slot order."""
    node = graph.nodes[node_id]
    kind = node.kind
    p = node.params
    in_shape = graph.spec_of(node.inputs[0][0]).shape

    if kind == "Dense":
        shapes = [("kernel", (in_shape[-1], p["units"]))]
        if p.get("use_bias", True):
            shapes.append(("bias", (p["units"],)))
        return shapes
    if kind == "Conv1D":
        shapes = [("kernel", (p["kernel_size"], in_shape[-1], p["filters"]))]
        if p.get("use_bias", True):
            shapes.append(("bias", (p["filters"],)))
        return shapes
    if kind == "Conv2D":
        k = p["kernel_size"]
        shapes = [("kernel", (k, k, in_shape[-1], p["filters"]))]
        if p.get("use_bias", True):
            shapes.append(("bias", (p["filters"],)))
        return shapes
    if kind == "SeparableConv2D":
        k, dm, cin = p["kernel_size"], p["depth_multiplier"], in_shape[-1]
        shapes = [
            ("depthwise_kernel", (k, k, cin, dm)),
            ("pointwise_kernel", (cin * dm, p["filters"])),
        ]
        if p.get("use_bias", True):
            shapes.append(("bias", (p["filters"],)))
        return shapes
    if kind == "BatchNormalization":
        c = in_shape[-1]
        shapes = []
        if p.get("scale", True):
            shapes.append(("gamma", (c,)))
        if p.get("center", True):
            shapes.append(("beta", (c,)))
        shapes += [("moving_mean", (c,)), ("moving_variance", (c,))]
        return shapes
    if kind == "LayerNormalization":
        c = in_shape[-1]
        shapes = []
        if p.get("scale", True):
            shapes.append(("gamma", (c,)))
        if p.get("center", True):
            shapes.append(("beta", (c,)))
        return shapes
    return []


def materialize_weights(graph: ModelGraph, node_id: str) -> list[ValueTensor]:
    """Draw the node's weights from its seeded generator."""
    node = graph.nodes[node_id]
    shapes = weight_shapes(graph, node_id)
    if not shapes:
        return []
    rng = _node_rng(graph, node_id)
    dtype = numpy_dtype(node.dtype)
    out = []
    for slot, shape in shapes:
        raw = rng.uniform(-0.5, 0.5, size=shape)
        if slot == "moving_variance":
            raw = raw + 0.75
        out.append(ValueTensor(TensorSpec(node.dtype, shape), raw.astype(dtype)))
    return out


def graph_weights(graph: ModelGraph) -> dict[str, list[ValueTensor]]:
    """Weights for every node that has any, keyed by node id."""
    return {
        nid: tensors
        for nid in graph.nodes
        if (tensors := materialize_weights(graph, nid))
    }


def default_inputs(graph: ModelGraph) -> list[ValueTensor]:
    """Deterministic graph inputs in [-0.5, 0.5], seeded like the weights."""
    out = []
    for idx, (name, spec) in enumerate(graph.graph_inputs):
        digest = hashlib.sha256(f"input:{idx}:{name}".encode()).digest()
        words = [int.from_bytes(digest[i: i + 4], "little") for i in range(0, 16, 4)]
        rng = np.random.default_rng(
            np.random.SeedSequence([graph.weight_seed & 0xFFFFFFFFFFFFFFFF, *words]))
        data = rng.uniform(-0.5, 0.5, size=spec.shape).astype(numpy_dtype(spec.dtype))
        out.append(ValueTensor(spec, data))
    return out
