"""Differential verdicts: crash / NaN / inconsistency / pass.

Inconsistency uses the relative mean-absolute-deviation distance between
two backends' collapsed outputs, each measured against a common anchor
vector.  Generated graphs have no dataset labels, so the anchor is a
deterministic low-magnitude pseudo-label vector seeded from the graph;
the distance then reflects relative output-magnitude divergence.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .backends import Backend, BackendOutcome, run_backend
from .dtypes import is_narrow
from .graph import ModelGraph
from .weights import ValueTensor, default_inputs


def d_mad(o: np.ndarray, y: np.ndarray, y2: np.ndarray) -> float:
    """|delta(Y,O) - delta(Y',O)| / (delta(Y,O) + delta(Y',O)), 0 when both
    deltas vanish; delta is the mean absolute deviation from the anchor."""
    o = np.asarray(o, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    y2 = np.asarray(y2, dtype=np.float64).ravel()
    if not (len(o) == len(y) == len(y2)):
        raise ValueError(f"length mismatch: {len(o)}, {len(y)}, {len(y2)}")
    if len(o) == 0:
        return 0.0
    d1 = float(np.mean(np.abs(y - o)))
    d2 = float(np.mean(np.abs(y2 - o)))
    if d1 + d2 == 0.0:
        return 0.0
    return abs(d1 - d2) / (d1 + d2)


def collapse_outputs(outputs: list[ValueTensor]) -> np.ndarray:
    """Flatten one output, or pad/crop all to the largest one and sum."""
    if not outputs:
        return np.zeros(0, dtype=np.float64)
    arrays = [np.asarray(vt.data, dtype=np.float64) for vt in outputs]
    if len(arrays) == 1:
        return arrays[0].ravel()
    target = max(arrays, key=lambda a: a.size).shape
    total = np.zeros(target, dtype=np.float64)
    with np.errstate(all="ignore"):
        for a in arrays:
            total = total + _fit_to(a, target)
    return total.ravel()


def _fit_to(a: np.ndarray, target: tuple[int, ...]) -> np.ndarray:
    # rank-align: append trailing length-1 axes, or crop extra axes to 1
    while a.ndim < len(target):
        a = a[..., None]
    while a.ndim > len(target):
        a = a.take(indices=range(1), axis=a.ndim - 1).reshape(a.shape[:-1])
    pads, slices = [], []
    for have, want in zip(a.shape, target):
        pads.append((0, max(want - have, 0)))
        slices.append(slice(0, want))
    return np.pad(a, pads, constant_values=0.0)[tuple(slices)]


def pseudo_labels(graph: ModelGraph, length: int) -> np.ndarray:
    """Deterministic anchor vector in [-1e-3, 1e-3) seeded from the graph."""
    digest = hashlib.sha256(b"pseudo-label").digest()
    words = [int.from_bytes(digest[i: i + 4], "little") for i in range(0, 16, 4)]
    rng = np.random.default_rng(
        np.random.SeedSequence([graph.weight_seed & 0xFFFFFFFFFFFFFFFF, *words]))
    return rng.uniform(-1e-3, 1e-3, size=length)


def _symptom(collapsed: np.ndarray) -> str:
    if np.isnan(collapsed).any():
        return "nan"
    if np.isinf(collapsed).any():
        return "inf"
    return "finite"


@dataclass
class Verdict:
    kind: str  # pass | crash | nan | inconsistency
    details: dict = field(default_factory=dict)
    d_mad: float | None = None
    locus: tuple[str, ...] = ()
    outcomes: dict[str, BackendOutcome] = field(default_factory=dict)

    @property
    def is_bug(self) -> bool:
        return self.kind in ("crash", "nan", "inconsistency")


def graph_uses_narrow(graph: ModelGraph) -> bool:
    if any(is_narrow(s.dtype) for _, s in graph.graph_inputs):
        return True
    return any(is_narrow(n.dtype) for n in graph.nodes.values())


def run_differential(graph: ModelGraph, inputs: list[ValueTensor] | None,
                     backends: list[Backend], threshold: float = 0.4,
                     capture: bool = False) -> Verdict:
    """Execute the graph on every backend and classify the outcome.

    crash: some backends fail to build/run while others succeed.
    nan:   all run, but finite/NaN/Inf symptoms differ across backends.
    inconsistency: all finite and some pairwise distance exceeds the
    threshold (skipped for graphs touching f16/bf16 storage).
    All backends failing identically is consistent behavior: a pass
    verdict whose details mark the model invalid.
    """
    if inputs is None:
        inputs = default_inputs(graph)
    outcomes = {b.id: run_backend(b, graph, inputs, capture=capture) for b in backends}
    details: dict = {"statuses": {bid: o.status for bid, o in outcomes.items()}}

    ok = [bid for bid, o in outcomes.items() if o.ok]
    failed = [bid for bid, o in outcomes.items() if not o.ok]
    if failed and ok:
        return Verdict("crash", details, locus=tuple(sorted(failed)),
                       outcomes=outcomes)
    if not ok:
        details["note"] = "all_backends_failed"
        return Verdict("pass", details, outcomes=outcomes)

    # structural disagreement: same declared output, different shape
    shapes = {bid: [tuple(vt.data.shape) for vt in outcomes[bid].outputs]
              for bid in ok}
    if len({tuple(map(tuple, s)) for s in shapes.values()}) > 1:
        details["note"] = "output_shape_mismatch"
        details["shapes"] = {b: [list(s) for s in v] for b, v in shapes.items()}
        return Verdict("inconsistency", details, d_mad=1.0,
                       locus=tuple(sorted(ok)[:2]), outcomes=outcomes)

    collapsed = {bid: collapse_outputs(outcomes[bid].outputs) for bid in ok}
    symptoms = {bid: _symptom(v) for bid, v in collapsed.items()}
    details["symptoms"] = symptoms
    if len(set(symptoms.values())) > 1:
        bad = tuple(sorted(b for b, s in symptoms.items() if s != "finite"))
        return Verdict("nan", details, locus=bad, outcomes=outcomes)
    if set(symptoms.values()) != {"finite"}:
        return Verdict("pass", details, outcomes=outcomes)  # same non-finite symptom

    if graph_uses_narrow(graph):
        details["note"] = "narrow_precision_oracle_skip"
        return Verdict("pass", details, outcomes=outcomes)

    lengths = {bid: len(v) for bid, v in collapsed.items()}
    if len(set(lengths.values())) > 1:
        details["note"] = "output_length_mismatch"
        pair = tuple(sorted(lengths))
        return Verdict("inconsistency", details, d_mad=1.0,
                       locus=pair[:2], outcomes=outcomes)

    anchor = pseudo_labels(graph, next(iter(lengths.values())))
    worst, pair = 0.0, ()
    ids = sorted(collapsed)
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            dist = d_mad(anchor, collapsed[ids[i]], collapsed[ids[j]])
            if dist >= worst:
                worst, pair = dist, (ids[i], ids[j])
    details["max_d_mad"] = worst
    if len(ids) > 1 and worst > threshold:
        return Verdict("inconsistency", details, d_mad=worst, locus=pair,
                       outcomes=outcomes)
    return Verdict("pass", details, d_mad=worst if len(ids) > 1 else None,
                   outcomes=outcomes)
