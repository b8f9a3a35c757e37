"""Model synthesis: build a small graph from scratch that covers every
layer input, parameter value and sequence of an original graph.

The loop closes gaps in strict priority order within a wall-clock budget:
parameter gaps first (layer insertion at the graph's end), then input
gaps (targeted dtype/rank/shape mutations on a freshly inserted node of
the gap's kind, so previously covered options are never lost), then
sequence gaps (a copied successor node wired from an existing producer,
with a duplicated feed for merging kinds).  Gaps that keep failing move
to the residual set instead of starving the loop.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .diversity import DiversitySnapshot, collect_diversity
from .graph import LayerNode, ModelGraph, TensorSpec
from .infer import InferenceFailure, infer_node_shape, infer_specs
from .mutate import InvalidMutant, _adapt, insert_layers, mdims, mdtype, mshape
from .registry import Registry
from .weights import weight_shapes

SYNTHESIS_BUDGET_SECONDS = 300.0
_GAP_ATTEMPTS = 3


@dataclass
class SynthesisReport:
    original_stats: dict
    synthesized_stats: dict
    residual: list = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def complete(self) -> bool:
        return not self.residual


def _stats(graph: ModelGraph, registry: Registry) -> dict:
    snap = collect_diversity(graph, registry)
    weight_count = 0
    for nid in graph.nodes:
        for _, shape in weight_shapes(graph, nid):
            n = 1
            for e in shape:
                n *= e
            weight_count += n
    items = snap.items()
    return {
        "nodes": len(graph.compute_nodes(registry)),
        "weights": weight_count,
        "inputs": sum(1 for i in items if i[0] == "input"),
        "params": sum(1 for i in items if i[0] == "param"),
        "sequences": sum(1 for i in items if i[0] == "seq"),
    }


def synthesize(original: ModelGraph, registry: Registry,
               rng: np.random.Generator,
               time_budget: float = SYNTHESIS_BUDGET_SECONDS,
               n_shape: int = 5) -> tuple[ModelGraph, SynthesisReport]:
    start = time.monotonic()
    original = infer_specs(original, registry)
    target = collect_diversity(original, registry).items()

    configs = _config_index(original, registry)
    synth = ModelGraph(
        graph_inputs=[(n, s) for n, s in original.graph_inputs],
        nodes={}, graph_outputs=[],
        weight_seed=original.weight_seed,
    )
    synth.specs = {}
    tail = synth.input_names[0]

    failures: dict = {}
    residual: list = []

    while time.monotonic() - start < time_budget:
        snap = collect_diversity(synth, registry)
        # set-difference order is hash-randomized; pin it for replayability
        missing = sorted((i for i in target - snap.items()
                          if failures.get(i, 0) < _GAP_ATTEMPTS), key=repr)
        if not missing:
            break
        gap_p = [i for i in missing if i[0] == "param"]
        gap_i = [i for i in missing if i[0] == "input"]
        gap_s = [i for i in missing if i[0] == "seq"]
        try:
            if gap_p:
                gap = _pick_param_gap(gap_p, synth, tail, registry, rng)
                synth, tail = _close_param_gap(synth, gap, configs, snap,
                                               registry, rng, tail)
            elif gap_i:
                gap = gap_i[int(rng.integers(len(gap_i)))]
                synth, tail = _close_input_gap(synth, gap, configs, snap,
                                               registry, rng, tail, n_shape)
            else:
                gap = gap_s[int(rng.integers(len(gap_s)))]
                synth = _close_sequence_gap(synth, gap, configs, registry, rng)
        except (InvalidMutant, InferenceFailure) as e:
            failures[gap] = failures.get(gap, 0) + 1
            if failures[gap] >= _GAP_ATTEMPTS:
                residual.append((gap, str(e)))
            continue

    synth = infer_specs(synth, registry)
    if not synth.graph_outputs and synth.nodes:
        sinks = sorted(nid for nid in synth.nodes if not synth.consumers(nid))
        synth.graph_outputs = [(nid, 0) for nid in (sinks or [next(iter(synth.nodes))])]
    leftover = collect_diversity(synth, registry).items()
    residual += [(i, "unreached") for i in sorted(target - leftover, key=repr)
                 if i not in {g for g, _ in residual}]

    report = SynthesisReport(
        original_stats=_stats(original, registry),
        synthesized_stats=_stats(synth, registry),
        residual=residual,
        elapsed=time.monotonic() - start,
    )
    return synth, report


def _config_index(original: ModelGraph, registry: Registry) -> dict:
    """kind -> list of (params, input specs) taken from the original."""
    out: dict[str, list] = {}
    for nid in original.topo_order():
        node = original.nodes[nid]
        if registry.schema(node.kind).is_utility:
            continue
        in_specs = [original.spec_of(src) for src, _ in node.inputs]
        out.setdefault(node.kind, []).append((dict(node.params), in_specs))
    return out


def _pick_param_gap(gap_p: list, synth: ModelGraph, tail: str,
                    registry: Registry, rng: np.random.Generator):
    """Prefer a gap whose kind forms a not-yet-covered pair with the tail;
    keeps insertions doing double duty for the sequence phase."""
    if tail in synth.nodes:
        tail_kind = synth.nodes[tail].kind
        snap = collect_diversity(synth, registry)
        good = [g for g in gap_p
                if ("seq", tail_kind, g[1]) not in snap.sequences]
        if good:
            return good[int(rng.integers(len(good)))]
    return gap_p[int(rng.integers(len(gap_p)))]


def _close_param_gap(synth, gap, configs, snap, registry, rng, tail):
    _, kind, pname, value = gap
    chosen = None
    for params, _specs in configs.get(kind, []):
        if params.get(pname) == value:
            chosen = dict(params)
            break
    if chosen is None:  # value observed only via defaults; synthesize directly
        chosen = dict(configs[kind][0][0]) if configs.get(kind) else \
            registry.schema(kind).default_params()
        chosen[pname] = value
    out = insert_layers(synth, 1, snap, registry, rng,
                        forced=[(kind, chosen)], anchor=tail)
    new_tail = out.touched[-1] if out.touched else tail
    return out.mutant, new_tail


def _ensure_node(synth, kind, params, snap, registry, rng, tail):
    out = insert_layers(synth, 1, snap, registry, rng,
                        forced=[(kind, params)], anchor=tail)
    return out.mutant, out.touched[-1]


def _close_input_gap(synth, gap, configs, snap, registry, rng, tail, n_shape):
    _, kind, prop, value = gap
    entries = configs.get(kind) or [(registry.schema(kind).default_params(), [])]
    if prop == "shape":
        match = [e for e in entries
                 if e[1] and e[1][0].shape_key() == value]
    elif prop == "rank":
        match = [e for e in entries if e[1] and e[1][0].rank == value]
    else:
        match = entries
    params = dict((match or entries)[0][0])
    synth, node = _ensure_node(synth, kind, params, snap, registry, rng, tail)
    snap = collect_diversity(synth, registry)
    if prop == "dtype":
        out = mdtype(synth, [node], snap, registry, rng, forced_label=value)
    elif prop == "rank":
        out = mdims(synth, [node], snap, registry, rng, forced_rank=int(value))
    else:
        shape = tuple(int(e) for e in value.split("x"))
        out = mshape(synth, [node], snap, registry, rng, n_shape=n_shape,
                     forced_shape=shape)
    return out.mutant, node if node in out.mutant.nodes else tail


def _close_sequence_gap(synth, gap, configs, registry, rng):
    """Realize pair (a, b) with a copied b fed (through transparent
    adapters when ranks require it) from an existing a node; merging b
    kinds get the feed duplicated, the ML route."""
    _, a_kind, b_kind = gap
    g = synth.copy()
    a_nodes = [nid for nid in sorted(g.compute_nodes(registry))
               if g.nodes[nid].kind == a_kind]
    if not a_nodes:
        raise InvalidMutant(f"no {a_kind} node to anchor pair ({a_kind},{b_kind})")
    schema_b = registry.schema(b_kind)
    a = a_nodes[int(rng.integers(len(a_nodes)))]
    a_spec = g.spec_of(a)

    entries = configs.get(b_kind) or [(schema_b.default_params(), [])]
    params, in_specs = entries[int(rng.integers(len(entries)))]
    ranks = sorted(schema_b.accepted_input_ranks)
    rank = a_spec.rank if a_spec.rank in ranks else (
        in_specs[0].rank if in_specs and in_specs[0].rank in ranks else ranks[0])
    if rank > a_spec.rank:
        shape = a_spec.shape + (1,) * (rank - a_spec.rank)
    else:
        shape = a_spec.shape[:rank]
    dtype = a_spec.dtype if a_spec.dtype in schema_b.accepted_dtypes \
        else sorted(schema_b.accepted_dtypes)[0]
    feed = _adapt(g, a, TensorSpec(dtype, shape), f"seq_{b_kind.lower()}_in")

    nid = g.fresh_id(f"seq_{b_kind.lower()}")
    arity = 2 if schema_b.is_merging else 1
    node = LayerNode(nid, b_kind, dtype, dict(params), tuple([(feed, 0)] * arity))
    in_spec = g.spec_of(feed)
    out_shape = infer_node_shape(node, [in_spec] * arity)
    g.nodes[nid] = node
    g.specs[nid] = TensorSpec(dtype, out_shape)
    g.graph_outputs.append((nid, 0))
    return infer_specs(g, registry)