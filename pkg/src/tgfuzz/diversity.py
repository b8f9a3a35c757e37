"""Diversity sets and the three coverage criteria.

Per compute kind we track covered input dtypes, ranks and shapes, covered
parameter values, and covered ordered kind pairs.  Utility operators
(Cast/Reshape/Pad/Crop) are transparent: an edge A -> Cast -> B counts as
the pair (A, B) and utility nodes never enter any set or denominator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .graph import ModelGraph
from .registry import Registry, sequence_space_size, valid_sequence


@dataclass
class CoverageConfig:
    n_type: int = 6
    n_shape: int = 5
    sigma: int = 5  # applied when loading the registry


@dataclass
class DiversitySnapshot:
    """Covered options for one graph or a whole corpus (merge to combine)."""

    dtypes: dict[str, set] = field(default_factory=dict)
    ranks: dict[str, set] = field(default_factory=dict)
    shapes: dict[str, set] = field(default_factory=dict)
    params: dict[tuple[str, str], set] = field(default_factory=dict)
    sequences: set = field(default_factory=set)

    def covered_kinds(self) -> set:
        return set(self.dtypes)

    def merge(self, other: "DiversitySnapshot") -> None:
        for k, v in other.dtypes.items():
            self.dtypes.setdefault(k, set()).update(v)
        for k, v in other.ranks.items():
            self.ranks.setdefault(k, set()).update(v)
        for k, v in other.shapes.items():
            self.shapes.setdefault(k, set()).update(v)
        for k, v in other.params.items():
            self.params.setdefault(k, set()).update(v)
        self.sequences.update(other.sequences)

    def items(self) -> set:
        """Flat, tagged view of every covered option (for gain computation)."""
        out = set()
        for kind, vals in self.dtypes.items():
            out.update(("input", kind, "dtype", v) for v in vals)
        for kind, vals in self.ranks.items():
            out.update(("input", kind, "rank", v) for v in vals)
        for kind, vals in self.shapes.items():
            out.update(("input", kind, "shape", v) for v in vals)
        for (kind, pname), vals in self.params.items():
            out.update(("param", kind, pname, v) for v in vals)
        out.update(("seq", a, b) for a, b in self.sequences)
        return out

    def copy(self) -> "DiversitySnapshot":
        snap = DiversitySnapshot()
        snap.merge(self)
        return snap


@dataclass
class BehaviorCoverage:
    """Opaque backend-reported path ids; the stand-in for branch coverage."""

    covered_paths: set = field(default_factory=set)


def compute_ancestor(graph: ModelGraph, name: str, registry: Registry) -> str | None:
    """Walk producer chains through utility nodes to the nearest compute node."""
    seen = 0
    while name in graph.nodes:
        node = graph.nodes[name]
        if not registry.schema(node.kind).is_utility:
            return name
        name = node.inputs[0][0]
        seen += 1
        if seen > len(graph.nodes):  # defensive; cycles are rejected elsewhere
            return None
    return None


def collect_diversity(graph: ModelGraph, registry: Registry) -> DiversitySnapshot:
    """Record input properties, parameter values and kind pairs of a graph."""
    snap = DiversitySnapshot()
    for nid in graph.topo_order():
        node = graph.nodes[nid]
        schema = registry.schema(node.kind)
        if schema.is_utility:
            continue
        snap.dtypes.setdefault(node.kind, set())
        snap.ranks.setdefault(node.kind, set())
        snap.shapes.setdefault(node.kind, set())
        for src, _ in node.inputs:
            spec = graph.spec_of(src)
            snap.dtypes[node.kind].add(spec.dtype)
            snap.ranks[node.kind].add(spec.rank)
            snap.shapes[node.kind].add(spec.shape_key())
            anc = compute_ancestor(graph, src, registry)
            if anc is not None:
                pair = (graph.nodes[anc].kind, node.kind)
                if valid_sequence(pair[0], pair[1], registry):
                    snap.sequences.add(pair)
        for p in schema.coverage_params:
            snap.params.setdefault((node.kind, p.name), set()).add(node.params[p.name])
    return snap


def cov_input(kind: str, snapshot: DiversitySnapshot, config: CoverageConfig,
              registry: Registry) -> float:
    schema = registry.schema(kind)
    if schema.is_utility:
        raise ValueError(f"{kind} is a utility kind")
    n_dim = len(schema.accepted_input_ranks)
    covered = (
        len(snapshot.dtypes.get(kind, ()))
        + len(snapshot.ranks.get(kind, ()))
        + min(len(snapshot.shapes.get(kind, ())), config.n_shape)
    )
    return covered / (config.n_type + n_dim + config.n_shape)


def cov_param(kind: str, snapshot: DiversitySnapshot, registry: Registry) -> float:
    schema = registry.schema(kind)
    if schema.is_utility:
        raise ValueError(f"{kind} is a utility kind")
    specs = schema.coverage_params
    if not specs:
        return 1.0
    num = sum(
        min(len(snapshot.params.get((kind, p.name), ())), p.space_size)
        for p in specs
    )
    return num / sum(p.space_size for p in specs)


def cov_sequence(snapshot: DiversitySnapshot, registry: Registry) -> float:
    denom = sequence_space_size(registry)
    if denom == 0:
        return 1.0
    return len(snapshot.sequences) / denom


def diversity_gain(graph_or_snap, cumulative: DiversitySnapshot,
                   registry: Registry | None = None) -> set:
    """Items the graph covers that the cumulative snapshot does not."""
    if isinstance(graph_or_snap, DiversitySnapshot):
        snap = graph_or_snap
    else:
        snap = collect_diversity(graph_or_snap, registry)
    return snap.items() - cumulative.items()


def record_behavior(paths: set, cumulative: BehaviorCoverage) -> tuple[bool, BehaviorCoverage]:
    """Union new path ids into the corpus coverage; flag novelty."""
    new = bool(paths - cumulative.covered_paths)
    cumulative.covered_paths |= paths
    return new, cumulative


def coverage_summary(snapshot: DiversitySnapshot, behavior: BehaviorCoverage,
                     config: CoverageConfig, registry: Registry) -> dict:
    kinds = registry.compute_kinds
    mean_in = (
        sum(cov_input(k, snapshot, config, registry) for k in kinds) / len(kinds)
        if kinds else 1.0
    )
    mean_par = (
        sum(cov_param(k, snapshot, registry) for k in kinds) / len(kinds)
        if kinds else 1.0
    )
    return {
        "cov_input_mean": mean_in,
        "cov_param_mean": mean_par,
        "cov_sequence": cov_sequence(snapshot, registry),
        "behavior_paths": len(behavior.covered_paths),
    }
