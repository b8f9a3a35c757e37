"""Random valid graph generation for campaign seeds and test corpora."""

from __future__ import annotations

import numpy as np

from .graph import MAX_ELEMENTS, LayerNode, ModelGraph, TensorSpec
from .infer import InferenceFailure, infer_node_shape, infer_specs
from .registry import Registry

_TRIES = 12


def _sample_params(schema, rng: np.random.Generator, min_units: int) -> dict:
    params = {}
    for p in schema.coverage_params:
        v = p.sample(rng)
        if p.name in ("units", "filters") and isinstance(v, int):
            v = max(v, min_units)
        params[p.name] = v
    return params


def random_graph(registry: Registry, rng: np.random.Generator,
                 n_nodes: int = 10, dtype: str = "float32", batch: int = 2,
                 merge_prob: float = 0.15, min_units: int = 1,
                 max_extent: int = 8) -> ModelGraph:
    """Grow a valid single-dtype graph of roughly ``n_nodes`` compute nodes.

    Node kinds are sampled among those accepting the chosen value's rank;
    parameter draws that fail shape inference are retried.  ``min_units``
    keeps degenerate zero-width layers out of seed corpora (mutation is
    the intended source of those).
    """
    rank = int(rng.choice([3, 4]))
    shape = (batch,) + tuple(int(rng.integers(2, max_extent + 1)) for _ in range(rank - 1))
    g = ModelGraph(
        graph_inputs=[("in0", TensorSpec(dtype, shape))],
        nodes={},
        graph_outputs=[],
        weight_seed=int(rng.integers(0, 2**63 - 1)),
    )
    g.specs = {}
    values = ["in0"]
    kinds = sorted(registry.compute_kinds)

    for step in range(n_nodes):
        placed = False
        if rng.random() < merge_prob:
            placed = _try_merge(g, registry, rng, values)
        for _ in range(_TRIES):
            if placed:
                break
            src = values[-1] if rng.random() < 0.7 else values[rng.integers(len(values))]
            spec = g.spec_of(src)
            pool = [
                k for k in kinds
                if spec.rank in registry.schema(k).accepted_input_ranks
                and not registry.schema(k).is_merging
            ]
            if not pool:
                src = "in0"
                spec = g.spec_of(src)
                pool = [k for k in kinds
                        if spec.rank in registry.schema(k).accepted_input_ranks
                        and not registry.schema(k).is_merging]
            kind = pool[rng.integers(len(pool))]
            schema = registry.schema(kind)
            params = _sample_params(schema, rng, min_units)
            nid = g.fresh_id(f"n_{kind.lower()}")
            node = LayerNode(nid, kind, dtype, params, ((src, 0),))
            try:
                out_shape = infer_node_shape(node, [spec])
            except InferenceFailure:
                continue
            out_spec = TensorSpec(dtype, out_shape)
            if out_spec.elements > MAX_ELEMENTS or 0 in out_spec.shape:
                continue
            g.nodes[nid] = node
            g.specs[nid] = out_spec
            values.append(nid)
            placed = True
        # a step may place nothing when every draw failed; that's fine
    sinks = [nid for nid in g.nodes if not g.consumers(nid)]
    if not sinks:
        # degenerate: nothing was placed; expose the input via a Flatten
        nid = g.fresh_id("n_flatten")
        g.nodes[nid] = LayerNode(nid, "Flatten", dtype, {}, (("in0", 0),))
        g.specs[nid] = TensorSpec(dtype, infer_node_shape(g.nodes[nid], [g.spec_of("in0")]))
        sinks = [nid]
    g.graph_outputs = [(nid, 0) for nid in sorted(sinks)]
    return infer_specs(g, registry)


def _try_merge(g: ModelGraph, registry: Registry, rng: np.random.Generator,
               values: list[str]) -> bool:
    groups: dict[tuple, list[str]] = {}
    for v in values:
        if v not in g.nodes:
            continue
        spec = g.spec_of(v)
        if spec.rank >= 2:
            groups.setdefault((spec.dtype, spec.shape), []).append(v)
    pairs = [m for m in groups.values() if len(m) >= 2]
    if not pairs:
        return False
    members = pairs[rng.integers(len(pairs))]
    a, b = members[-2], members[-1]
    mk = sorted(registry.merging_kinds)[rng.integers(len(registry.merging_kinds))]
    schema = registry.schema(mk)
    params = _sample_params(schema, rng, 1)
    nid = g.fresh_id(f"n_{mk.lower()}")
    node = LayerNode(nid, mk, g.spec_of(a).dtype, params, ((a, 0), (b, 0)))
    try:
        shape = infer_node_shape(node, [g.spec_of(a), g.spec_of(b)])
    except InferenceFailure:
        return False
    spec = TensorSpec(node.dtype, shape)
    if spec.elements > MAX_ELEMENTS:
        return False
    g.nodes[nid] = node
    g.specs[nid] = spec
    values.append(nid)
    return True


def _shape_preserving_palette(registry: Registry, rng: np.random.Generator,
                              rank: int, channels: int, n_configs: int) -> list:
    """(kind, params) configs whose output shape equals their input shape."""
    act = ["linear", "relu", "sigmoid", "tanh"]
    candidates = [
        ("Dense", lambda: {"units": channels,
                           "activation": act[rng.integers(4)],
                           "use_bias": bool(rng.integers(2))}),
        ("BatchNormalization", lambda: {"epsilon": float(rng.uniform(1e-5, 1e-2)),
                                        "center": True, "scale": True}),
        ("LayerNormalization", lambda: {"epsilon": float(rng.uniform(1e-5, 1e-2)),
                                        "center": True, "scale": True}),
        ("ReLU", lambda: {"max_value": (None, 6.0)[rng.integers(2)],
                          "negative_slope": float(rng.uniform(0, 0.3)),
                          "threshold": 0.0}),
        ("LeakyReLU", lambda: {"alpha": float(rng.uniform(0.01, 0.5))}),
        ("ELU", lambda: {"alpha": float(rng.uniform(0.1, 2.0))}),
        ("Softmax", lambda: {"axis": -1}),
        ("Dropout", lambda: {"rate": float(rng.uniform(0.0, 0.9))}),
    ]
    if rank == 4:
        candidates += [
            ("Conv2D", lambda: {"filters": channels, "kernel_size": int(rng.integers(1, 4)),
                                "strides": 1, "padding": "same", "dilation_rate": 1,
                                "activation": act[rng.integers(4)],
                                "use_bias": bool(rng.integers(2))}),
            ("SeparableConv2D", lambda: {"filters": channels,
                                         "kernel_size": int(rng.integers(1, 4)),
                                         "strides": 1, "padding": "same",
                                         "dilation_rate": 1,
                                         "depth_multiplier": int(rng.integers(1, 4)),
                                         "use_bias": bool(rng.integers(2))}),
            ("MaxPooling2D", lambda: {"pool_size": int(rng.integers(1, 4)),
                                      "strides": 1, "padding": "same"}),
            ("AveragePooling2D", lambda: {"pool_size": int(rng.integers(1, 4)),
                                          "strides": 1, "padding": "same"}),
        ]
    if rank == 3:
        candidates.append(
            ("Conv1D", lambda: {"filters": channels, "kernel_size": int(rng.integers(1, 4)),
                                "strides": 1, "padding": "same", "dilation_rate": 1,
                                "activation": act[rng.integers(4)],
                                "use_bias": bool(rng.integers(2))}))
    out = []
    for _ in range(n_configs):
        kind, make = candidates[rng.integers(len(candidates))]
        out.append((kind, make()))
    return out


def random_blocky_graph(registry: Registry, rng: np.random.Generator,
                        n_nodes: int = 40, dtype: str = "float32",
                        batch: int = 2, n_configs: int = 5) -> ModelGraph:
    """Chain built from a small palette of repeated shape-preserving configs.

    Mimics real networks' repeated blocks (Conv-BN-ReLU and friends): with
    n_nodes well above n_configs most nodes are duplicate
    (kind, params, input-spec) configurations, which is what the synthesis
    size law is about.
    """
    rank = int(rng.choice([3, 4]))
    channels = int(rng.integers(2, 5))
    spatial = tuple(int(rng.integers(3, 7)) for _ in range(rank - 2))
    shape = (batch,) + spatial + (channels,)
    palette = _shape_preserving_palette(registry, rng, rank, channels, n_configs)
    g = ModelGraph(
        graph_inputs=[("in0", TensorSpec(dtype, shape))],
        nodes={}, graph_outputs=[],
        weight_seed=int(rng.integers(0, 2**63 - 1)),
    )
    g.specs = {}
    tail = "in0"
    guard = 0
    while len(g.nodes) < n_nodes and guard < n_nodes * _TRIES:
        guard += 1
        kind, params = palette[rng.integers(len(palette))]
        schema = registry.schema(kind)
        spec = g.spec_of(tail)
        if spec.rank not in schema.accepted_input_ranks:
            continue
        nid = g.fresh_id(f"b_{kind.lower()}")
        node = LayerNode(nid, kind, dtype, dict(params), ((tail, 0),))
        try:
            shape_out = infer_node_shape(node, [spec])
        except InferenceFailure:
            continue
        out_spec = TensorSpec(dtype, shape_out)
        if out_spec.elements > MAX_ELEMENTS or 0 in out_spec.shape:
            continue
        g.nodes[nid] = node
        g.specs[nid] = out_spec
        tail = nid
    if not g.nodes:
        return random_graph(registry, rng, n_nodes=n_nodes, dtype=dtype, batch=batch)
    g.graph_outputs = [(tail, 0)]
    return infer_specs(g, registry)


def duplicate_config_ratio(graph: ModelGraph, registry: Registry) -> float:
    """Fraction of compute nodes sharing a (kind, params, input-spec) config."""
    configs = []
    for nid in graph.compute_nodes(registry):
        node = graph.nodes[nid]
        key = (node.kind,
               tuple(sorted((k, repr(v)) for k, v in node.params.items())),
               tuple(graph.spec_of(src).shape for src, _ in node.inputs),
               tuple(graph.spec_of(src).dtype for src, _ in node.inputs))
        configs.append(key)
    if not configs:
        return 0.0
    return 1.0 - len(set(configs)) / len(configs)
