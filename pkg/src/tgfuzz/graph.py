"""Computation-graph IR: tensor specs, layer nodes, the model graph, and
the four-constraint validator (input degree, dimension, datatype, shape).

Graphs are immutable values: mutation code builds new node maps instead of
editing in place, so graphs can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .dtypes import is_label
from .registry import Registry

# Element-count ceiling per tensor; keeps desk-scale interpreters bounded.
MAX_ELEMENTS = 1 << 16


@dataclass(frozen=True)
class TensorSpec:
    """Dtype label plus shape; index 0 is the batch dimension.

    Extent 0 is representable only because a zero-width Dense output must
    flow to backends to exercise the degenerate-shape bug class; declared
    graph inputs always have every extent >= 1.
    """

    dtype: str
    shape: tuple[int, ...]

    def __post_init__(self):
        if not is_label(self.dtype):
            raise ValueError(f"unknown dtype label: {self.dtype!r}")
        if len(self.shape) < 1:
            raise ValueError("rank must be >= 1")
        if any(e < 0 for e in self.shape):
            raise ValueError(f"negative extent in shape {self.shape}")
        object.__setattr__(self, "shape", tuple(int(e) for e in self.shape))

    @property
    def rank(self) -> int:
        return len(self.shape)

    @property
    def elements(self) -> int:
        n = 1
        for e in self.shape:
            n *= e
        return n

    def shape_key(self) -> str:
        return "x".join(str(e) for e in self.shape)


@dataclass(frozen=True)
class LayerNode:
    """One operator invocation: kind, complete params, input refs.

    ``inputs`` entries are (producer, slot) pairs; the producer is either
    another node id or a graph-input name.  ``dtype`` is the node's
    initialization dtype; inputs must match it (Cast excepted).
    """

    id: str
    kind: str
    dtype: str
    params: dict = field(default_factory=dict)
    inputs: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "inputs", tuple((str(s), int(i)) for s, i in self.inputs)
        )

    def with_params(self, **updates) -> "LayerNode":
        return replace(self, params={**self.params, **updates})


@dataclass(frozen=True)
class Violation:
    node_id: str
    constraint: str  # input_degree | dimension | datatype | shape | structure
    detail: str


class GraphError(ValueError):
    pass


@dataclass
class ModelGraph:
    """Directed acyclic graph of layer nodes.

    ``specs`` maps every value name (graph-input name or node id) to its
    TensorSpec once inference has run; node output slots are always 0.
    """

    graph_inputs: list[tuple[str, TensorSpec]]
    nodes: dict[str, LayerNode]
    graph_outputs: list[tuple[str, int]]
    weight_seed: int = 0
    input_overrides: dict[str, str] = field(default_factory=dict)  # node id -> nan|inf
    specs: dict[str, TensorSpec] = field(default_factory=dict)

    def __post_init__(self):
        names = [n for n, _ in self.graph_inputs] + list(self.nodes)
        if len(set(names)) != len(names):
            raise GraphError("node ids and input names must be unique")
        for name, spec in self.graph_inputs:
            if any(e < 1 for e in spec.shape):
                raise GraphError(f"graph input {name}: extent < 1")

    @property
    def input_names(self) -> list[str]:
        return [n for n, _ in self.graph_inputs]

    def input_spec(self, name: str) -> TensorSpec:
        for n, spec in self.graph_inputs:
            if n == name:
                return spec
        raise GraphError(f"unknown graph input: {name}")

    def spec_of(self, name: str) -> TensorSpec:
        if name in self.specs:
            return self.specs[name]
        for n, spec in self.graph_inputs:
            if n == name:
                return spec
        raise GraphError(f"no spec for {name!r}; run infer_specs first")

    def consumers(self, name: str) -> list[str]:
        return [
            nid
            for nid, node in self.nodes.items()
            if any(src == name for src, _ in node.inputs)
        ]

    def topo_order(self) -> list[str]:
        """Node ids in dependency order; raises GraphError on cycles.

        In-degree counts one per edge, so duplicate edges from the same
        producer (e.g. a merge fed the same value twice) balance out.
        """
        indeg = {nid: 0 for nid in self.nodes}
        edges: dict[str, list[str]] = {}
        for node in self.nodes.values():
            for src, _ in node.inputs:
                if src in self.nodes:
                    indeg[node.id] += 1
                    edges.setdefault(src, []).append(node.id)
        ready = [nid for nid, d in indeg.items() if d == 0]
        order: list[str] = []
        while ready:
            nid = ready.pop(0)
            order.append(nid)
            for cid in edges.get(nid, ()):
                indeg[cid] -= 1
                if indeg[cid] == 0:
                    ready.append(cid)
        if len(order) != len(self.nodes):
            raise GraphError("graph contains a cycle")
        return order

    def compute_nodes(self, registry: Registry) -> list[str]:
        return [
            nid for nid, n in self.nodes.items()
            if not registry.schema(n.kind).is_utility
        ]

    def copy(self) -> "ModelGraph":
        return ModelGraph(
            graph_inputs=list(self.graph_inputs),
            nodes=dict(self.nodes),
            graph_outputs=list(self.graph_outputs),
            weight_seed=self.weight_seed,
            input_overrides=dict(self.input_overrides),
            specs=dict(self.specs),
        )

    def fresh_id(self, stem: str) -> str:
        taken = set(self.nodes) | set(self.input_names)
        i = len(self.nodes)
        while f"{stem}_{i}" in taken:
            i += 1
        return f"{stem}_{i}"


def validate(graph: ModelGraph, registry: Registry) -> list[Violation]:
    """Check the four tensor constraints plus structural sanity.

    Violations are returned as values; an empty list means the graph is
    valid.  Requires inferred specs for the dimension/shape checks; nodes
    without specs are reported as structure violations.
    """
    out: list[Violation] = []
    names = set(graph.input_names) | set(graph.nodes)

    try:
        graph.topo_order()
    except GraphError as e:
        return [Violation("", "structure", str(e))]

    for nid, slot in graph.graph_outputs:
        if nid not in names:
            out.append(Violation(nid, "structure", "graph output refers to missing node"))

    # reachability from graph inputs
    reached = set(graph.input_names)
    for nid in graph.topo_order():
        node = graph.nodes[nid]
        if all(src in reached for src, _ in node.inputs):
            reached.add(nid)
    for nid in graph.nodes:
        if nid not in reached:
            out.append(Violation(nid, "structure", "node unreachable from graph inputs"))

    for nid, node in graph.nodes.items():
        schema = registry.schema(node.kind)
        lo, hi = schema.input_arity
        if not (lo <= len(node.inputs) <= hi):
            out.append(Violation(nid, "input_degree",
                                 f"{len(node.inputs)} inputs, arity {lo}..{hi}"))
            continue
        in_specs = []
        missing = False
        for src, _ in node.inputs:
            if src not in names:
                out.append(Violation(nid, "structure", f"missing producer {src!r}"))
                missing = True
                break
            try:
                in_specs.append(graph.spec_of(src))
            except GraphError:
                out.append(Violation(nid, "structure", f"no inferred spec for {src!r}"))
                missing = True
                break
        if missing:
            continue
        for spec in in_specs:
            if spec.rank not in schema.accepted_input_ranks:
                out.append(Violation(nid, "dimension",
                                     f"rank {spec.rank} not in {sorted(schema.accepted_input_ranks)}"))
            if spec.dtype not in schema.accepted_dtypes:
                out.append(Violation(nid, "datatype", f"{spec.dtype} not accepted"))
            elif node.kind != "Cast" and spec.dtype != node.dtype:
                out.append(Violation(nid, "datatype",
                                     f"input {spec.dtype} != node dtype {node.dtype}"))
        if schema.is_merging and len({s.shape for s in in_specs}) > 1:
            out.append(Violation(nid, "shape",
                                 f"merging inputs differ: {[s.shape for s in in_specs]}"))
    return out
