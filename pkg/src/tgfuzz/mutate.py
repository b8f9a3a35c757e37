"""The eight diversity-driven mutation operators.

Every operator prefers options (dtypes, ranks, shapes, parameter values,
kinds, kind pairs) that the cumulative diversity snapshot has not covered,
falling back to a random choice when everything is covered.  Input- and
parameter-level mutations are layer-wise: utility adapters realize the
mutated input and a repair chain restores the node's original output spec,
so downstream nodes never notice.

All operators are pure functions of (graph, snapshot, rng state) and
return a new graph; the seed graph is never modified.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diversity import DiversitySnapshot
from .graph import MAX_ELEMENTS, LayerNode, ModelGraph, TensorSpec
from .infer import InferenceFailure, infer_node_shape, infer_specs
from .registry import Registry, sample_param_value, valid_sequence

MUTATION_KINDS = ("MDtype", "MDims", "MShape", "MParam", "IL", "ML", "CL", "SpecialI")

_RETRIES = 8
_MAX_EXTENT = 64  # keeps repeated shape mutations from ballooning tensors


class InvalidMutant(Exception):
    pass


class NoMergeCandidates(Exception):
    pass


@dataclass
class MutationOutcome:
    mutant: ModelGraph
    kind: str
    touched: list[str] = field(default_factory=list)
    restored: dict[str, str] = field(default_factory=dict)  # node -> value that replaced its output
    chosen_options: list = field(default_factory=list)


def pick_targets(graph: ModelGraph, registry: Registry,
                 rng: np.random.Generator) -> list[str]:
    """1..10 distinct compute nodes, clamped to what the graph has."""
    n = int(rng.integers(1, 11))
    pool = sorted(graph.compute_nodes(registry))
    if not pool:
        return []
    take = min(n, len(pool))
    idx = rng.choice(len(pool), size=take, replace=False)
    return [pool[i] for i in sorted(idx)]


# -- graph surgery helpers --------------------------------------------------


def _add_node(g: ModelGraph, stem: str, kind: str, dtype: str, params: dict,
              src: str, out_shape: tuple[int, ...]) -> str:
    nid = g.fresh_id(stem)
    g.nodes[nid] = LayerNode(nid, kind, dtype, params, ((src, 0),))
    g.specs[nid] = TensorSpec(dtype, out_shape)
    return nid


def _adapt(g: ModelGraph, src: str, target: TensorSpec, stem: str,
           rng: np.random.Generator | None = None) -> str:
    """Utility chain (Cast/Reshape/Pad/Crop) turning src's value into target.

    Rank is adjusted first (length-1 insertion, or crop-and-squeeze of
    dropped dimensions), then every extent is padded/cropped.  When an rng
    is given, dropped dimensions are chosen randomly among non-batch dims;
    otherwise trailing dims go.
    """
    cur = g.spec_of(src)
    if cur.dtype != target.dtype:
        src = _add_node(g, f"{stem}_cast", "Cast", target.dtype, {}, src, cur.shape)
        cur = g.specs[src]
    if cur.rank < target.rank:
        shape = cur.shape + (1,) * (target.rank - cur.rank)
        src = _add_node(g, f"{stem}_expand", "Reshape", cur.dtype,
                        {"target_shape": shape}, src, shape)
        cur = g.specs[src]
    elif cur.rank > target.rank:
        n_drop = cur.rank - target.rank
        if rng is not None and cur.rank > 1:
            drop = sorted(rng.choice(np.arange(1, cur.rank), size=n_drop,
                                     replace=False).tolist())
        else:
            drop = list(range(cur.rank - n_drop, cur.rank))
        cropping = tuple(
            (0, cur.shape[d] - 1 if d in drop and cur.shape[d] > 1 else 0)
            for d in range(cur.rank)
        )
        if any(b or a for b, a in cropping):
            shape = tuple(e - b - a for e, (b, a) in zip(cur.shape, cropping))
            src = _add_node(g, f"{stem}_shrink", "Crop", cur.dtype,
                            {"cropping": cropping}, src, shape)
            cur = g.specs[src]
        shape = tuple(e for d, e in enumerate(cur.shape) if d not in drop)
        src = _add_node(g, f"{stem}_squeeze", "Reshape", cur.dtype,
                        {"target_shape": shape}, src, shape)
        cur = g.specs[src]
    if any(t > c for c, t in zip(cur.shape, target.shape)):
        padding = tuple((0, max(t - c, 0)) for c, t in zip(cur.shape, target.shape))
        shape = tuple(c + a for c, (_, a) in zip(cur.shape, padding))
        src = _add_node(g, f"{stem}_pad", "Pad", cur.dtype,
                        {"padding": padding}, src, shape)
        cur = g.specs[src]
    if any(t < c for c, t in zip(cur.shape, target.shape)):
        cropping = tuple((0, max(c - t, 0)) for c, t in zip(cur.shape, target.shape))
        src = _add_node(g, f"{stem}_crop", "Crop", cur.dtype,
                        {"cropping": cropping}, src, target.shape)
    return src


def _rewire(g: ModelGraph, old: str, new: str, skip: set[str]) -> None:
    """Point every consumer of ``old`` (except ``skip``) and every graph
    output at ``new``."""
    for cid in list(g.nodes):
        if cid in skip or cid == new:
            continue
        node = g.nodes[cid]
        if any(src == old for src, _ in node.inputs):
            g.nodes[cid] = LayerNode(
                node.id, node.kind, node.dtype, node.params,
                tuple((new if src == old else src, slot) for src, slot in node.inputs))
    g.graph_outputs = [
        ((new, 0) if o == old else (o, slot)) for o, slot in g.graph_outputs
    ]


def _rebuild(g: ModelGraph, nid: str, *, dtype: str | None = None,
             params: dict | None = None,
             inputs: tuple | None = None) -> None:
    node = g.nodes[nid]
    g.nodes[nid] = LayerNode(
        nid, node.kind,
        dtype if dtype is not None else node.dtype,
        params if params is not None else node.params,
        inputs if inputs is not None else node.inputs,
    )


def _local_infer(g: ModelGraph, nid: str) -> TensorSpec:
    """Infer one node's output spec from the working graph's specs."""
    node = g.nodes[nid]
    in_specs = [g.spec_of(src) for src, _ in node.inputs]
    shape = infer_node_shape(node, in_specs)
    spec = TensorSpec(node.dtype, shape)
    if spec.elements > MAX_ELEMENTS:
        raise InferenceFailure(nid, f"tensor too large: {shape}")
    return spec


def _finish(g: ModelGraph, registry: Registry, kind: str, touched, restored,
            options) -> MutationOutcome:
    try:
        mutant = infer_specs(g, registry)
    except InferenceFailure as e:
        raise InvalidMutant(str(e)) from None
    return MutationOutcome(mutant, kind, touched, restored, options)


# -- input-level mutations ---------------------------------------------------


def mdtype(graph: ModelGraph, targets: list[str], snapshot: DiversitySnapshot,
           registry: Registry, rng: np.random.Generator,
           forced_label: str | None = None) -> MutationOutcome:
    g = graph.copy()
    restored, options = {}, []
    for nid in targets:
        node = g.nodes[nid]
        schema = registry.schema(node.kind)
        accepted = sorted(schema.accepted_dtypes)
        covered = snapshot.dtypes.get(node.kind, set())
        fresh = [d for d in accepted if d not in covered]
        pool = fresh if fresh else accepted
        label = forced_label if forced_label else pool[rng.integers(len(pool))]
        orig_spec = g.spec_of(nid)
        new_inputs = []
        for src, slot in node.inputs:
            cast = _add_node(g, f"{nid}_in", "Cast", label, {}, src,
                             g.spec_of(src).shape)
            new_inputs.append((cast, 0))
        _rebuild(g, nid, dtype=label, inputs=tuple(new_inputs))
        g.specs[nid] = _local_infer(g, nid)
        back = _add_node(g, f"{nid}_out", "Cast", orig_spec.dtype, {}, nid,
                         g.specs[nid].shape)
        _rewire(g, nid, back, skip={back})
        restored[nid] = back
        options.append((nid, "dtype", label))
    return _finish(g, registry, "MDtype", list(targets), restored, options)


def mdims(graph: ModelGraph, targets: list[str], snapshot: DiversitySnapshot,
          registry: Registry, rng: np.random.Generator,
          forced_rank: int | None = None) -> MutationOutcome:
    g = graph.copy()
    restored, options = {}, []
    for nid in targets:
        node = g.nodes[nid]
        schema = registry.schema(node.kind)
        orig_spec = g.spec_of(nid)
        in_spec0 = g.spec_of(node.inputs[0][0])
        accepted = sorted(schema.accepted_input_ranks)
        covered = snapshot.ranks.get(node.kind, set())
        fresh = [r for r in accepted if r not in covered]
        pool = fresh if fresh else accepted
        done = False
        for _ in range(_RETRIES):
            rank = forced_rank if forced_rank else int(pool[rng.integers(len(pool))])
            trial = g.copy()
            if rank >= in_spec0.rank:
                target_in = TensorSpec(in_spec0.dtype,
                                       in_spec0.shape + (1,) * (rank - in_spec0.rank))
            else:
                keep = [0] + sorted(
                    rng.choice(np.arange(1, in_spec0.rank),
                               size=rank - 1, replace=False).tolist())
                target_in = TensorSpec(in_spec0.dtype,
                                       tuple(in_spec0.shape[d] for d in keep))
            new_inputs = []
            for src, slot in trial.nodes[nid].inputs:
                tail = _adapt(trial, src, target_in, f"{nid}_in", rng=rng)
                new_inputs.append((tail, 0))
            _rebuild(trial, nid, inputs=tuple(new_inputs))
            try:
                trial.specs[nid] = _local_infer(trial, nid)
            except InferenceFailure:
                continue
            tail = _adapt(trial, nid, orig_spec, f"{nid}_fix")
            skip = {tail}
            cur = tail
            while cur != nid:  # protect the whole repair chain from rewiring
                skip.add(cur)
                cur = trial.nodes[cur].inputs[0][0]
            _rewire(trial, nid, tail, skip=skip)
            g = trial
            restored[nid] = tail
            options.append((nid, "rank", rank))
            done = True
            break
        if not done:
            raise InvalidMutant(f"{nid}: no feasible rank adjustment")
    return _finish(g, registry, "MDims", list(targets), restored, options)


def mshape(graph: ModelGraph, targets: list[str], snapshot: DiversitySnapshot,
           registry: Registry, rng: np.random.Generator,
           n_shape: int = 5,
           forced_shape: tuple[int, ...] | None = None) -> MutationOutcome:
    g = graph.copy()
    restored, options = {}, []
    for nid in targets:
        node = g.nodes[nid]
        orig_spec = g.spec_of(nid)
        in_spec0 = g.spec_of(node.inputs[0][0])
        covered = snapshot.shapes.get(node.kind, set())
        want_fresh = len(covered) < n_shape
        done = False
        for _ in range(_RETRIES):
            if forced_shape is not None:
                shape = tuple(forced_shape)
            else:
                shape = (in_spec0.shape[0],) + tuple(
                    int(rng.integers(1, min(2 * max(e, 1), _MAX_EXTENT) + 1))
                    for e in in_spec0.shape[1:]
                )
            spec = TensorSpec(in_spec0.dtype, shape)
            if spec.elements > MAX_ELEMENTS:
                continue
            if (forced_shape is None and want_fresh
                    and spec.shape_key() in covered and shape != in_spec0.shape):
                continue
            trial = g.copy()
            new_inputs = []
            for src, slot in trial.nodes[nid].inputs:
                tail = _adapt(trial, src, spec, f"{nid}_in")
                new_inputs.append((tail, 0))
            _rebuild(trial, nid, inputs=tuple(new_inputs))
            try:
                trial.specs[nid] = _local_infer(trial, nid)
            except InferenceFailure:
                continue
            tail = _adapt(trial, nid, orig_spec, f"{nid}_fix")
            skip = {tail}
            cur = tail
            while cur != nid:
                skip.add(cur)
                cur = trial.nodes[cur].inputs[0][0]
            _rewire(trial, nid, tail, skip=skip)
            g = trial
            restored[nid] = tail
            options.append((nid, "shape", spec.shape_key()))
            done = True
            break
        if not done:
            raise InvalidMutant(f"{nid}: no feasible input shape")
    return _finish(g, registry, "MShape", list(targets), restored, options)


# -- parameter-level mutation ------------------------------------------------


def mparam(graph: ModelGraph, targets: list[str], snapshot: DiversitySnapshot,
           registry: Registry, rng: np.random.Generator) -> MutationOutcome:
    g = graph.copy()
    restored, options = {}, []
    any_changed = False
    for nid in targets:
        node = g.nodes[nid]
        schema = registry.schema(node.kind)
        specs = list(schema.coverage_params)
        if not specs:
            continue
        order = rng.permutation(len(specs))
        orig_spec = g.spec_of(nid)
        done = False
        for pi in order:
            pspec = specs[pi]
            covered = snapshot.params.get((node.kind, pspec.name), set())
            for _ in range(_RETRIES):
                value = sample_param_value(schema, pspec.name, covered, rng)
                if value == node.params.get(pspec.name):
                    continue
                trial = g.copy()
                _rebuild(trial, nid,
                         params={**trial.nodes[nid].params, pspec.name: value})
                try:
                    trial.specs[nid] = _local_infer(trial, nid)
                except InferenceFailure:
                    continue
                if trial.specs[nid] != orig_spec:
                    tail = _adapt(trial, nid, orig_spec, f"{nid}_fix")
                    skip = {tail}
                    cur = tail
                    while cur != nid:
                        skip.add(cur)
                        cur = trial.nodes[cur].inputs[0][0]
                    _rewire(trial, nid, tail, skip=skip)
                    restored[nid] = tail
                else:
                    restored[nid] = nid
                g = trial
                options.append((nid, pspec.name, value))
                done = True
                any_changed = True
                break
            if done:
                break
    if not any_changed:
        raise InvalidMutant("no mutable parameter on any target")
    return _finish(g, registry, "MParam", list(restored), restored, options)


# -- structure-level mutations -----------------------------------------------


def insert_layers(graph: ModelGraph, count: int, snapshot: DiversitySnapshot,
                  registry: Registry, rng: np.random.Generator,
                  forced: list[tuple[str, dict]] | None = None,
                  anchor: str | None = None) -> MutationOutcome:
    """Insert up to ``count`` layers, preferring uncovered kinds and pairs.

    ``forced`` (used by model synthesis) pins the inserted (kind, params)
    list; ``anchor`` pins the predecessor (the append-to-end behavior of
    the synthesis loop).
    """
    g = graph.copy()
    restored, options, touched = {}, [], []
    local_pairs = set(snapshot.sequences)

    if forced is not None:
        plan = list(forced)
    else:
        kinds = sorted(registry.compute_kinds)
        uncovered = [k for k in kinds if k not in snapshot.covered_kinds()]
        rng.shuffle(uncovered)
        plan = [(k, None) for k in uncovered[:count]]
        while len(plan) < count:
            plan.append((kinds[rng.integers(len(kinds))], None))

    inserted = 0
    for new_kind, forced_params in plan:
        schema = registry.schema(new_kind)
        if anchor is not None:
            pred = anchor
        else:
            anchors = sorted(g.compute_nodes(registry)) or list(g.input_names)
            preferred = [
                a for a in anchors
                if a in g.nodes and (g.nodes[a].kind, new_kind) not in local_pairs
                and valid_sequence(g.nodes[a].kind, new_kind, registry)
            ]
            pool = preferred if preferred else anchors
            pred = pool[rng.integers(len(pool))]
        pred_spec = g.spec_of(pred)

        done = False
        for _ in range(_RETRIES):
            trial = g.copy()
            if forced_params is not None:
                params = dict(forced_params)
            else:
                params = {
                    p.name: sample_param_value(
                        schema, p.name,
                        snapshot.params.get((new_kind, p.name), set()), rng)
                    for p in schema.coverage_params
                }
            rank = (pred_spec.rank if pred_spec.rank in schema.accepted_input_ranks
                    else sorted(schema.accepted_input_ranks)[
                        rng.integers(len(schema.accepted_input_ranks))])
            dtype = (pred_spec.dtype if pred_spec.dtype in schema.accepted_dtypes
                     else sorted(schema.accepted_dtypes)[0])
            if rank > pred_spec.rank:
                shape = pred_spec.shape + (1,) * (rank - pred_spec.rank)
            else:
                shape = pred_spec.shape[:rank]
            target_in = TensorSpec(dtype, shape)
            nid = trial.fresh_id(f"ins_{new_kind.lower()}")
            if target_in == pred_spec:
                feed = pred
            else:
                feed = _adapt(trial, pred, target_in, f"{nid}_in")
            arity = 2 if schema.is_merging else 1
            trial.nodes[nid] = LayerNode(nid, new_kind, dtype, params,
                                         tuple([(feed, 0)] * arity))
            try:
                trial.specs[nid] = _local_infer(trial, nid)
            except InferenceFailure:
                continue
            tail = _adapt(trial, nid, pred_spec, f"{nid}_fix")
            skip = {nid}
            cur = tail
            while cur != nid:
                skip.add(cur)
                cur = trial.nodes[cur].inputs[0][0]
            cur = feed
            while cur != pred and cur in trial.nodes:
                skip.add(cur)
                cur = trial.nodes[cur].inputs[0][0]
            _rewire(trial, pred, tail, skip=skip)
            g = trial
            restored[pred] = tail
            touched.append(nid)
            if pred in g.nodes:
                local_pairs.add((g.nodes[pred].kind, new_kind))
                options.append((g.nodes[pred].kind, new_kind))
            inserted += 1
            done = True
            break
        if not done and forced is not None:
            raise InvalidMutant(f"cannot insert {new_kind} after {pred}")
    if not inserted:
        raise InvalidMutant("no layer could be inserted")
    return _finish(g, registry, "IL", touched, restored, options)


def merge_layers(graph: ModelGraph, snapshot: DiversitySnapshot,
                 registry: Registry, rng: np.random.Generator,
                 forced_pair: tuple[str, str] | None = None) -> MutationOutcome:
    g = graph.copy()
    merging = sorted(registry.merging_kinds)
    if not merging:
        raise NoMergeCandidates("registry has no merging kinds")
    fresh = [k for k in merging if k not in snapshot.covered_kinds()]
    mk = (fresh if fresh else merging)[rng.integers(len(fresh) if fresh else len(merging))]
    schema = registry.schema(mk)

    groups: dict[tuple, list[str]] = {}
    for nid in sorted(g.compute_nodes(registry)):
        spec = g.spec_of(nid)
        if spec.rank in schema.accepted_input_ranks and spec.dtype in schema.accepted_dtypes:
            groups.setdefault((spec.dtype, spec.shape), []).append(nid)
    pairs = [
        (a, b)
        for members in groups.values() if len(members) >= 2
        for i, a in enumerate(members) for b in members[i + 1:]
    ]
    if forced_pair:
        pairs = [p for p in pairs
                 if (g.nodes[p[0]].kind, g.nodes[p[1]].kind) == forced_pair
                 or (g.nodes[p[1]].kind, g.nodes[p[0]].kind) == forced_pair]
    if not pairs:
        raise NoMergeCandidates(f"no equal-spec node pair for {mk}")
    a, b = pairs[rng.integers(len(pairs))]
    if forced_pair and g.nodes[a].kind != forced_pair[0]:
        a, b = b, a

    params = {}
    if mk == "Concatenate":
        covered = snapshot.params.get((mk, "axis"), set())
        params["axis"] = sample_param_value(schema, "axis", covered, rng)
    nid = g.fresh_id(f"merge_{mk.lower()}")
    g.nodes[nid] = LayerNode(nid, mk, g.spec_of(a).dtype, params,
                             ((a, 0), (b, 0)))
    try:
        g.specs[nid] = _local_infer(g, nid)
    except InferenceFailure as e:
        raise InvalidMutant(str(e)) from None

    spec_a = g.spec_of(a)
    tail = nid if g.specs[nid] == spec_a else _adapt(g, nid, spec_a, f"{nid}_fix")
    chain = {nid, tail}
    cur = tail
    while cur != nid:
        chain.add(cur)
        cur = g.nodes[cur].inputs[0][0]

    # route the merged value into one former consumer without creating a cycle
    ancestors = _ancestors(g, a) | _ancestors(g, b) | {a, b}
    routed = False
    for side in (a, b) if rng.integers(2) == 0 else (b, a):
        for cid in sorted(g.consumers(side)):
            if cid in chain or cid in ancestors:
                continue
            node = g.nodes[cid]
            new_inputs, replaced = [], False
            for src, slot in node.inputs:
                if src == side and not replaced:
                    new_inputs.append((tail, 0))
                    replaced = True
                else:
                    new_inputs.append((src, slot))
            g.nodes[cid] = LayerNode(node.id, node.kind, node.dtype,
                                     node.params, tuple(new_inputs))
            routed = True
            break
        if routed:
            break
        out_idx = [i for i, (o, _) in enumerate(g.graph_outputs) if o == side]
        if out_idx:
            g.graph_outputs[out_idx[0]] = (tail, 0)
            routed = True
            break
    if not routed:
        g.graph_outputs.append((tail, 0))
    return _finish(g, registry, "ML", [a, b, nid], {}, [(g.nodes[a].kind, mk),
                                                        (g.nodes[b].kind, mk)])


def _ancestors(g: ModelGraph, nid: str) -> set[str]:
    seen: set[str] = set()
    stack = [nid]
    while stack:
        cur = stack.pop()
        if cur not in g.nodes:
            continue
        for src, _ in g.nodes[cur].inputs:
            if src not in seen:
                seen.add(src)
                stack.append(src)
    return seen


def connect_layers(graph: ModelGraph, count: int, snapshot: DiversitySnapshot,
                   registry: Registry, rng: np.random.Generator,
                   forced_pair: tuple[str, str] | None = None) -> MutationOutcome:
    g = graph.copy()
    compute = sorted(g.compute_nodes(registry))
    if len(compute) < 1:
        raise InvalidMutant("no compute nodes to connect")

    def compatible(a: str, b: str) -> bool:
        sb = registry.schema(g.nodes[b].kind)
        spec_a = g.spec_of(a)
        return (spec_a.rank in sb.accepted_input_ranks
                and spec_a.dtype in sb.accepted_dtypes)

    candidates = [
        (a, b) for a in compute for b in compute
        if a != b and compatible(a, b)
    ]
    if forced_pair:
        candidates = [
            (a, b) for a, b in candidates
            if (g.nodes[a].kind, g.nodes[b].kind) == forced_pair
        ]
    if not candidates:
        raise InvalidMutant("no rank-compatible node pair")
    fresh = [
        (a, b) for a, b in candidates
        if (g.nodes[a].kind, g.nodes[b].kind) not in snapshot.sequences
    ]
    pool = fresh if fresh else candidates
    idx = rng.permutation(len(pool))[:max(count, 1)]

    touched, options = [], []
    seen_kind_pairs = set()
    for i in idx:
        a, b = pool[i]
        kp = (g.nodes[a].kind, g.nodes[b].kind)
        if kp in seen_kind_pairs:
            continue
        src_node = g.nodes[b]
        nid = g.fresh_id(f"cl_{src_node.kind.lower()}")
        arity = 2 if registry.schema(src_node.kind).is_merging else 1
        g.nodes[nid] = LayerNode(nid, src_node.kind, g.spec_of(a).dtype,
                                 dict(src_node.params), tuple([(a, 0)] * arity))
        try:
            g.specs[nid] = _local_infer(g, nid)
        except InferenceFailure:
            del g.nodes[nid]
            continue
        g.graph_outputs.append((nid, 0))
        touched.append(nid)
        seen_kind_pairs.add(kp)
        options.append(kp)
    if not touched:
        raise InvalidMutant("every candidate pair failed inference")
    return _finish(g, registry, "CL", touched, {}, options)


def special_input(graph: ModelGraph, registry: Registry,
                  rng: np.random.Generator) -> MutationOutcome:
    g = graph.copy()
    pool = sorted(g.compute_nodes(registry))
    if not pool:
        raise InvalidMutant("no compute node to override")
    nid = pool[rng.integers(len(pool))]
    value = ("nan", "inf")[rng.integers(2)]
    g.input_overrides = {**g.input_overrides, nid: value}
    return _finish(g, registry, "SpecialI", [nid], {}, [(nid, "override", value)])


# -- dispatcher ---------------------------------------------------------------


def apply_mutation(kind: str, graph: ModelGraph, snapshot: DiversitySnapshot,
                   registry: Registry, rng: np.random.Generator,
                   n_shape: int = 5) -> MutationOutcome:
    """Run one mutation operator end to end (target picking included)."""
    if kind in ("MDtype", "MDims", "MShape", "MParam"):
        targets = pick_targets(graph, registry, rng)
        if not targets:
            raise InvalidMutant("graph has no compute nodes")
        if kind == "MDtype":
            return mdtype(graph, targets, snapshot, registry, rng)
        if kind == "MDims":
            return mdims(graph, targets, snapshot, registry, rng)
        if kind == "MShape":
            return mshape(graph, targets, snapshot, registry, rng, n_shape)
        return mparam(graph, targets, snapshot, registry, rng)
    count = int(rng.integers(1, 11))
    if kind == "IL":
        return insert_layers(graph, count, snapshot, registry, rng)
    if kind == "ML":
        return merge_layers(graph, snapshot, registry, rng)
    if kind == "CL":
        return connect_layers(graph, count, snapshot, registry, rng)
    if kind == "SpecialI":
        return special_input(graph, registry, rng)
    raise ValueError(f"unknown mutation kind {kind!r}")
