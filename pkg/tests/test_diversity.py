import numpy as np

from tgfuzz.diversity import (BehaviorCoverage, CoverageConfig,
                              DiversitySnapshot, collect_diversity, cov_input,
                              cov_param, cov_sequence, diversity_gain,
                              record_behavior)
from tgfuzz.generate import random_graph
from tgfuzz.graph import LayerNode, ModelGraph, TensorSpec
from tgfuzz.infer import infer_specs
from tgfuzz.registry import load_registry, valid_sequence

CONV = {"filters": 2, "kernel_size": 3, "strides": 1, "padding": "valid",
        "dilation_rate": 1, "activation": "linear", "use_bias": True}
BN = {"epsilon": 1e-3, "center": True, "scale": True}
RELU = {"max_value": None, "negative_slope": 0.0, "threshold": 0.0}


def _graph(registry, nodes, inputs, outputs):
    g = ModelGraph(graph_inputs=inputs, nodes=nodes, graph_outputs=outputs)
    return infer_specs(g, registry)


class TestCollectDiversity:
    def test_single_conv(self, registry):
        g = _graph(registry,
                   {"c": LayerNode("c", "Conv2D", "float32", CONV, (("in0", 0),))},
                   [("in0", TensorSpec("float32", (2, 8, 8, 3)))], [("c", 0)])
        snap = collect_diversity(g, registry)
        assert snap.dtypes["Conv2D"] == {"float32"}
        assert snap.ranks["Conv2D"] == {4}
        assert snap.shapes["Conv2D"] == {"2x8x8x3"}
        assert snap.sequences == set()

    def test_conv_bn_pair(self, registry):
        g = _graph(registry, {
            "c": LayerNode("c", "Conv2D", "float32", CONV, (("in0", 0),)),
            "b": LayerNode("b", "BatchNormalization", "float32", BN, (("c", 0),)),
        }, [("in0", TensorSpec("float32", (2, 8, 8, 3)))], [("b", 0)])
        snap = collect_diversity(g, registry)
        assert ("Conv2D", "BatchNormalization") in snap.sequences

    def test_utility_transparency(self, registry):
        g = _graph(registry, {
            "c": LayerNode("c", "Conv2D", "float32", CONV, (("in0", 0),)),
            "cast": LayerNode("cast", "Cast", "float64", {}, (("c", 0),)),
            "r": LayerNode("r", "ReLU", "float64", RELU, (("cast", 0),)),
        }, [("in0", TensorSpec("float32", (2, 8, 8, 3)))], [("r", 0)])
        snap = collect_diversity(g, registry)
        assert ("Conv2D", "ReLU") in snap.sequences
        assert "Cast" not in snap.dtypes

    def test_params_recorded(self, registry):
        g = _graph(registry,
                   {"c": LayerNode("c", "Conv2D", "float32", CONV, (("in0", 0),))},
                   [("in0", TensorSpec("float32", (2, 8, 8, 3)))], [("c", 0)])
        snap = collect_diversity(g, registry)
        assert snap.params[("Conv2D", "filters")] == {2}
        assert snap.params[("Conv2D", "padding")] == {"valid"}

    def test_bruteforce_equivalence_small_graphs(self, registry, rng):
        for _ in range(40):
            g = random_graph(registry, rng, n_nodes=int(rng.integers(1, 10)))
            snap = collect_diversity(g, registry)
            # naive re-traversal oracle
            dtypes, ranks, shapes, params, seqs = {}, {}, {}, {}, set()
            for nid, node in g.nodes.items():
                schema = registry.schema(node.kind)
                if schema.is_utility:
                    continue
                for src, _ in node.inputs:
                    spec = g.spec_of(src)
                    dtypes.setdefault(node.kind, set()).add(spec.dtype)
                    ranks.setdefault(node.kind, set()).add(spec.rank)
                    shapes.setdefault(node.kind, set()).add(spec.shape_key())
                    anc = src
                    while anc in g.nodes and registry.schema(
                            g.nodes[anc].kind).is_utility:
                        anc = g.nodes[anc].inputs[0][0]
                    if anc in g.nodes and valid_sequence(
                            g.nodes[anc].kind, node.kind, registry):
                        seqs.add((g.nodes[anc].kind, node.kind))
                for p in schema.coverage_params:
                    params.setdefault((node.kind, p.name), set()).add(
                        node.params[p.name])
            assert snap.dtypes == dtypes and snap.ranks == ranks
            assert snap.shapes == shapes and snap.params == params
            assert snap.sequences == seqs


class TestCovInput:
    def test_empty_snapshot_zero(self, registry):
        assert cov_input("Conv2D", DiversitySnapshot(), CoverageConfig(),
                         registry) == 0.0

    def test_hand_example_5_14(self):
        # kind with 3 accepted ranks: n_dim=3; 2 dtypes, 1 rank, 2 shapes
        reg = load_registry({"registry_version": "t", "schemas": [{
            "kind": "K", "accepted_input_ranks": [2, 3, 4],
            "produced_output_ranks": [2], "params": []}]})
        snap = DiversitySnapshot(
            dtypes={"K": {"float32", "float64"}}, ranks={"K": {2}},
            shapes={"K": {"2x3", "2x4"}})
        assert cov_input("K", snap, CoverageConfig(), reg) == 5 / 14

    def test_full_coverage_capped_at_one(self, registry):
        snap = DiversitySnapshot(
            dtypes={"Conv2D": {"bfloat16", "double", "float16", "float32",
                               "float64", "half"}},
            ranks={"Conv2D": {4}},
            shapes={"Conv2D": {f"2x{i}x{i}x3" for i in range(3, 12)}})
        assert cov_input("Conv2D", snap, CoverageConfig(), registry) == 1.0


class TestCovParam:
    def test_hand_example_4_7(self):
        # padding {valid, same} fully covered + numeric filters 2 of sigma=5
        reg = load_registry({"registry_version": "t", "schemas": [{
            "kind": "K", "accepted_input_ranks": [4],
            "produced_output_ranks": [4], "params": [
                {"name": "padding", "kind": "categorical",
                 "domain": ["valid", "same"]},
                {"name": "filters", "kind": "numeric", "range": [1, 8]},
            ]}]})
        snap = DiversitySnapshot(params={
            ("K", "padding"): {"valid", "same"},
            ("K", "filters"): {1, 2},
        })
        assert cov_param("K", snap, reg) == 4 / 7

    def test_numeric_capped_at_sigma(self):
        reg = load_registry({"registry_version": "t", "schemas": [{
            "kind": "K", "accepted_input_ranks": [2],
            "produced_output_ranks": [2], "params": [
                {"name": "n", "kind": "numeric", "range": [0, 20]}]}]})
        snap = DiversitySnapshot(params={("K", "n"): set(range(9))})
        assert cov_param("K", snap, reg) == 1.0

    def test_defaults_count_once(self, registry):
        snap = DiversitySnapshot(params={
            ("Conv2D", p.name): {v} for p, v in zip(
                registry.schema("Conv2D").coverage_params,
                [1, 1, 1, "valid", 1, "linear", True])})
        specs = registry.schema("Conv2D").coverage_params
        expected = sum(min(1, p.space_size) for p in specs) / sum(
            p.space_size for p in specs)
        assert cov_param("Conv2D", snap, registry) == expected

    def test_paramless_kind_is_one(self, registry):
        assert cov_param("Add", DiversitySnapshot(), registry) == 1.0


class TestCovSequence:
    def test_empty_zero(self, registry):
        assert cov_sequence(DiversitySnapshot(), registry) == 0.0

    def test_three_of_seven(self):
        reg = load_registry({"registry_version": "t", "schemas": [
            {"kind": "A", "accepted_input_ranks": [4], "produced_output_ranks": [4]},
            {"kind": "B", "accepted_input_ranks": [4], "produced_output_ranks": [2]},
            {"kind": "C", "accepted_input_ranks": [2, 4], "produced_output_ranks": [4]},
        ]})
        snap = DiversitySnapshot(sequences={("A", "A"), ("A", "B"), ("C", "A")})
        assert cov_sequence(snap, reg) == 3 / 7

    def test_all_covered_is_one(self, registry):
        snap = DiversitySnapshot(sequences={
            (a, b) for a in registry.compute_kinds for b in registry.compute_kinds
            if valid_sequence(a, b, registry)})
        assert cov_sequence(snap, registry) == 1.0


class TestGainAndBehavior:
    def test_gain_empty_for_merged_graph(self, registry, rng):
        g = random_graph(registry, rng, n_nodes=6)
        cum = collect_diversity(g, registry)
        assert diversity_gain(g, cum, registry) == set()

    def test_gain_detects_new_pair(self, registry, rng):
        g = random_graph(registry, rng, n_nodes=6)
        cum = collect_diversity(g, registry)
        snap = cum.copy()
        snap.sequences.add(("Dense", "Softmax"))
        gain = diversity_gain(snap, cum)
        assert ("seq", "Dense", "Softmax") in gain

    def test_gain_is_pure(self, registry, rng):
        g = random_graph(registry, rng, n_nodes=6)
        cum = DiversitySnapshot()
        assert diversity_gain(g, cum, registry) == diversity_gain(g, cum, registry)

    def test_monotone_after_merge(self, registry, rng):
        cum = DiversitySnapshot()
        cfg = CoverageConfig()
        prev = (0.0, 0.0, 0.0)
        for _ in range(10):
            g = random_graph(registry, rng, n_nodes=5)
            cum.merge(collect_diversity(g, registry))
            kinds = registry.compute_kinds
            cur = (
                sum(cov_input(k, cum, cfg, registry) for k in kinds),
                sum(cov_param(k, cum, registry) for k in kinds),
                cov_sequence(cum, registry),
            )
            assert all(c >= p - 1e-12 for c, p in zip(cur, prev))
            prev = cur

    def test_record_behavior(self):
        cov = BehaviorCoverage()
        new, cov = record_behavior({"a", "b"}, cov)
        assert new and cov.covered_paths == {"a", "b"}
        new, cov = record_behavior({"a"}, cov)
        assert not new
        new, cov = record_behavior(set(), cov)
        assert not new and len(cov.covered_paths) == 2
        new, cov = record_behavior({"c"}, cov)
        assert new and len(cov.covered_paths) == 3
