"""Bug deduplication.

Crashes are keyed by a normalized failure-location signature extracted
from the trace.  NaN and inconsistency bugs are keyed by (responsible
operator kind, triggering property class), located by comparing the two
backends' per-node values and minimized by dropping input-override
annotations one at a time.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .graph import ModelGraph
from .registry import Registry
from .verdict import Verdict, run_differential

_FRAME_RE = re.compile(r'File "(?P<file>[^"]+)", line \d+, in (?P<func>\S+)')
_LAST_FRAMES = 3
_DIVERGENCE_REL = 0.05


def crash_signature(trace: str) -> str:
    """Exception class plus the last few frame functions, numbers scrubbed."""
    frames = [
        f"{m.group('file').rsplit('/', 1)[-1]}:{m.group('func')}"
        for m in _FRAME_RE.finditer(trace)
    ][-_LAST_FRAMES:]
    exc = ""
    for line in reversed(trace.strip().splitlines()):
        line = line.strip()
        if line and not line.startswith(("File ", "Traceback", "raise ")):
            exc = line
            break
    exc = re.sub(r"0x[0-9a-fA-F]+", "#", exc)
    exc = re.sub(r"\d+", "#", exc)
    return "|".join(frames + [exc])


@dataclass
class BugRecord:
    dedup_key: tuple
    verdict_kind: str
    backend_ids: tuple[str, ...]
    d_mad: float | None = None
    minimal_trigger: str = ""
    model_path: str = ""
    first_iteration: int = -1


@dataclass
class Deduper:
    registry: Registry
    backends: list
    threshold: float = 0.4
    records: dict[tuple, BugRecord] = field(default_factory=dict)

    def observe(self, verdict: Verdict, graph: ModelGraph,
                iteration: int = -1) -> tuple[bool, BugRecord]:
        """Fold one bug verdict into the unique-record map."""
        if verdict.kind == "crash":
            traces = [o.trace for o in verdict.outcomes.values() if not o.ok]
            key = ("crash", crash_signature(traces[0] if traces else ""))
            trigger = "backends disagree on buildability/runnability"
        else:
            graph, verdict = self._minimize(graph, verdict)
            kind_name, prop = self._localize(graph, verdict)
            key = (verdict.kind, kind_name, prop)
            trigger = f"{kind_name} with {prop}"
        if key in self.records:
            return False, self.records[key]
        rec = BugRecord(
            dedup_key=key,
            verdict_kind=verdict.kind,
            backend_ids=tuple(sorted(verdict.outcomes)),
            d_mad=verdict.d_mad,
            minimal_trigger=trigger,
            first_iteration=iteration,
        )
        self.records[key] = rec
        return True, rec

    def _minimize(self, graph: ModelGraph, verdict: Verdict):
        """Drop input overrides one at a time while the verdict persists."""
        for nid in sorted(graph.input_overrides):
            trial = graph.copy()
            trial.input_overrides = {
                k: v for k, v in trial.input_overrides.items() if k != nid}
            v2 = run_differential(trial, None, self.backends, self.threshold,
                                  capture=True)
            if v2.kind == verdict.kind:
                graph, verdict = trial, v2
        if not verdict.outcomes or not any(
                o.node_values for o in verdict.outcomes.values()):
            verdict = run_differential(graph, None, self.backends,
                                       self.threshold, capture=True)
        return graph, verdict

    def _localize(self, graph: ModelGraph, verdict: Verdict) -> tuple[str, str]:
        captures = {bid: o.node_values for bid, o in verdict.outcomes.items()
                    if o.ok and o.node_values}
        node_id = None
        if len(captures) >= 2:
            (ca, cb) = list(captures.values())[:2]
            common = [nid for nid in graph.topo_order() if nid in ca and nid in cb]
            best, best_rel = None, 0.0
            for nid in common:
                a, b = np.asarray(ca[nid], np.float64), np.asarray(cb[nid], np.float64)
                if a.shape != b.shape:
                    node_id = nid
                    break
                fa, fb = np.isfinite(a).all(), np.isfinite(b).all()
                if fa != fb:
                    node_id = nid
                    break
                if not a.size:
                    continue
                denom = np.abs(a) + np.abs(b) + 1e-12
                rel = float(np.max(np.abs(a - b) / denom))
                if rel > best_rel:
                    best, best_rel = nid, rel
                if rel > _DIVERGENCE_REL and verdict.kind == "inconsistency":
                    node_id = nid
                    break
            if node_id is None:
                node_id = best
        if node_id is None and graph.graph_outputs:
            node_id = graph.graph_outputs[0][0]
        if node_id is None or node_id not in graph.nodes:
            return ("<graph>", "input")
        node = graph.nodes[node_id]
        # walk off utility repair nodes onto the nearest compute node
        from .diversity import compute_ancestor

        if self.registry.schema(node.kind).is_utility:
            anc = compute_ancestor(graph, node_id, self.registry)
            if anc:
                node = graph.nodes[anc]
                node_id = anc
        return node.kind, self._property_class(graph, node_id)

    def _property_class(self, graph: ModelGraph, node_id: str) -> str:
        node = graph.nodes[node_id]
        if node_id in graph.input_overrides:
            return f"special_input:{graph.input_overrides[node_id]}"
        schema = self.registry.schema(node.kind)
        defaults = schema.default_params()
        for p in schema.coverage_params:
            if node.params.get(p.name) != defaults.get(p.name):
                return f"param:{p.name}"
        if node.dtype != "float32":
            return f"dtype:{node.dtype}"
        from .diversity import compute_ancestor

        for src, _ in node.inputs:
            anc = compute_ancestor(graph, src, self.registry)
            if anc:
                return f"sequence:{graph.nodes[anc].kind}->{node.kind}"
        return "input"
