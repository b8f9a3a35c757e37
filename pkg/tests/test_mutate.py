import numpy as np
import pytest

from tgfuzz.diversity import DiversitySnapshot, collect_diversity
from tgfuzz.generate import random_graph
from tgfuzz.graph import LayerNode, ModelGraph, TensorSpec, validate
from tgfuzz.infer import infer_specs
from tgfuzz.model_io import from_document, to_document
from tgfuzz.mutate import (InvalidMutant, NoMergeCandidates, connect_layers,
                           insert_layers, mdims, mdtype, merge_layers, mparam,
                           mshape, pick_targets, special_input)

CONV = {"filters": 2, "kernel_size": 3, "strides": 1, "padding": "valid",
        "dilation_rate": 1, "activation": "relu", "use_bias": True}
BN = {"epsilon": 1e-3, "center": True, "scale": True}


def conv_bn(registry, dtype="float32"):
    g = ModelGraph(
        graph_inputs=[("in0", TensorSpec(dtype, (5, 8, 8, 3)))],
        nodes={
            "conv": LayerNode("conv", "Conv2D", dtype, CONV, (("in0", 0),)),
            "bn": LayerNode("bn", "BatchNormalization", dtype, BN, (("conv", 0),)),
        },
        graph_outputs=[("bn", 0)],
        weight_seed=5,
    )
    return infer_specs(g, registry)


class TestPickTargets:
    def test_clamps_to_graph_size(self, registry, rng):
        g = conv_bn(registry)
        for _ in range(30):
            t = pick_targets(g, registry, rng)
            assert 1 <= len(t) <= 2
            assert all(x in g.nodes for x in t)

    def test_n_uniform_over_1_to_10(self, registry, rng):
        import scipy.stats

        g = random_graph(registry, np.random.default_rng(0), n_nodes=30)
        counts = np.zeros(10)
        for _ in range(2000):
            counts[len(pick_targets(g, registry, rng)) - 1] += 1
        chi = scipy.stats.chisquare(counts)
        assert chi.pvalue > 1e-3

    def test_empty_graph(self, registry, rng):
        g = ModelGraph(graph_inputs=[("in0", TensorSpec("float32", (2, 4)))],
                       nodes={}, graph_outputs=[])
        assert pick_targets(g, registry, rng) == []


class TestMDtype:
    def test_prefers_uncovered_and_restores_dtype(self, registry, rng):
        g = conv_bn(registry)
        snap = DiversitySnapshot(dtypes={"Conv2D": {"float32"}})
        out = mdtype(g, ["conv"], snap, registry, rng)
        new_dtype = out.mutant.nodes["conv"].dtype
        assert new_dtype != "float32"
        restored = out.restored["conv"]
        assert out.mutant.spec_of(restored) == g.spec_of("conv")
        assert validate(out.mutant, registry) == []

    def test_all_covered_falls_back(self, registry, rng):
        g = conv_bn(registry)
        snap = DiversitySnapshot(dtypes={"Conv2D": {
            "bfloat16", "double", "float16", "float32", "float64", "half"}})
        out = mdtype(g, ["conv"], snap, registry, rng)
        assert validate(out.mutant, registry) == []

    def test_downstream_specs_unchanged(self, registry, rng):
        g = conv_bn(registry)
        out = mdtype(g, ["conv"], DiversitySnapshot(), registry, rng)
        assert out.mutant.spec_of("bn") == g.spec_of("bn")


class TestMDims:
    def test_expand_inserts_length_one(self, registry, rng):
        g = ModelGraph(
            graph_inputs=[("in0", TensorSpec("float32", (10, 3, 3)))],
            nodes={"bn": LayerNode("bn", "BatchNormalization", "float32", BN,
                                   (("in0", 0),))},
            graph_outputs=[("bn", 0)], weight_seed=1)
        g = infer_specs(g, registry)
        snap = DiversitySnapshot(ranks={"BatchNormalization": {2, 3, 5}})
        out = mdims(g, ["bn"], snap, registry, rng)  # only 4 uncovered
        spec = out.mutant.spec_of(out.mutant.nodes["bn"].inputs[0][0])
        assert spec.rank == 4 and spec.shape == (10, 3, 3, 1)
        assert out.mutant.spec_of(out.restored["bn"]) == g.spec_of("bn")

    def test_repair_restores_downstream(self, registry, rng):
        g = conv_bn(registry)
        snap = DiversitySnapshot(ranks={"BatchNormalization": {4}})
        out = mdims(g, ["bn"], snap, registry, rng)
        assert validate(out.mutant, registry) == []
        # graph output spec is preserved
        out_id = out.mutant.graph_outputs[0][0]
        assert out.mutant.spec_of(out_id) == g.spec_of("bn")


class TestMShape:
    def test_rank_preserved_many_trials(self, registry, rng):
        g = conv_bn(registry)
        for _ in range(200):
            out = mshape(g, ["conv"], DiversitySnapshot(), registry, rng)
            spec = out.mutant.spec_of(out.mutant.nodes["conv"].inputs[0][0])
            assert spec.rank == 4
            assert out.mutant.spec_of(out.restored["conv"]) == g.spec_of("conv")

    def test_fresh_shape_when_under_cap(self, registry, rng):
        g = conv_bn(registry)
        covered = {"2x8x8x3"}
        snap = DiversitySnapshot(shapes={"Conv2D": set(covered)})
        hits = 0
        for _ in range(50):
            out = mshape(g, ["conv"], snap, registry, rng)
            key = out.mutant.spec_of(
                out.mutant.nodes["conv"].inputs[0][0]).shape_key()
            hits += key in covered
        assert hits == 0


class TestMParam:
    def test_uncovered_value_chosen(self, registry, rng):
        g = conv_bn(registry)
        snap = collect_diversity(g, registry)
        for _ in range(30):
            out = mparam(g, ["conv"], snap, registry, rng)
            (nid, pname, value) = out.chosen_options[0]
            assert value not in snap.params.get(("Conv2D", pname), set())

    def test_dense_units_zero_permitted(self, registry, rng):
        g = ModelGraph(
            graph_inputs=[("in0", TensorSpec("float32", (2, 6)))],
            nodes={"d": LayerNode("d", "Dense", "float32",
                                  {"units": 3, "activation": "linear",
                                   "use_bias": True}, (("in0", 0),))},
            graph_outputs=[("d", 0)], weight_seed=2)
        g = infer_specs(g, registry)
        snap = DiversitySnapshot(params={("Dense", "units"):
                                         set(range(1, 17))})
        found = False
        for _ in range(40):
            out = mparam(g, ["d"], snap, registry, rng)
            if out.chosen_options and out.chosen_options[0][2] == 0:
                found = True
                assert out.mutant.nodes["d"].params["units"] == 0
                assert out.mutant.spec_of(out.restored["d"]) == g.spec_of("d")
                assert validate(out.mutant, registry) == []
                break
        assert found

    def test_output_restored_when_spec_changes(self, registry, rng):
        g = conv_bn(registry)
        snap = DiversitySnapshot()
        for _ in range(50):
            out = mparam(g, ["conv"], snap, registry, rng)
            rep = out.restored.get("conv")
            if rep:
                assert out.mutant.spec_of(rep) == g.spec_of("conv")


class TestInsertLayers:
    def test_uncovered_pair_preferred(self, registry, rng):
        g = conv_bn(registry)
        snap = collect_diversity(g, registry)
        for _ in range(60):
            try:
                out = insert_layers(g, 1, snap, registry, rng)
            except InvalidMutant:
                continue
            for pair in out.chosen_options:
                assert pair not in snap.sequences

    def test_single_node_graph_append(self, registry, rng):
        g = ModelGraph(
            graph_inputs=[("in0", TensorSpec("float32", (2, 8, 8, 3)))],
            nodes={"c": LayerNode("c", "Conv2D", "float32", CONV, (("in0", 0),))},
            graph_outputs=[("c", 0)], weight_seed=1)
        g = infer_specs(g, registry)
        out = insert_layers(g, 1, DiversitySnapshot(), registry, rng)
        assert len(out.mutant.compute_nodes(registry)) == 2
        assert validate(out.mutant, registry) == []

    def test_forced_config_and_anchor(self, registry, rng):
        g = conv_bn(registry)
        out = insert_layers(
            g, 1, DiversitySnapshot(), registry, rng,
            forced=[("ReLU", {"max_value": 6.0, "negative_slope": 0.0,
                              "threshold": 0.0})],
            anchor="bn")
        new = out.touched[-1]
        assert out.mutant.nodes[new].kind == "ReLU"
        assert out.mutant.nodes[new].params["max_value"] == 6.0


class TestMergeLayers:
    def test_merges_equal_specs(self, registry, rng):
        # conv and bn have identical output specs (5, 6, 6, 2)
        g = conv_bn(registry)
        out = merge_layers(g, DiversitySnapshot(), registry, rng)
        merged = [n for n in out.mutant.nodes.values()
                  if registry.schema(n.kind).is_merging]
        assert merged
        node = merged[0]
        specs = [out.mutant.spec_of(src) for src, _ in node.inputs]
        assert specs[0].shape == specs[1].shape
        assert validate(out.mutant, registry) == []

    def test_no_candidates_raises(self, registry, rng):
        g = ModelGraph(
            graph_inputs=[("in0", TensorSpec("float32", (2, 8, 8, 3)))],
            nodes={"c": LayerNode("c", "Conv2D", "float32", CONV, (("in0", 0),))},
            graph_outputs=[("c", 0)], weight_seed=1)
        g = infer_specs(g, registry)
        with pytest.raises(NoMergeCandidates):
            merge_layers(g, DiversitySnapshot(), registry, rng)

    def test_shape_constraint_over_trials(self, registry, rng):
        ok = 0
        for _ in range(60):
            g = random_graph(registry, rng, n_nodes=8)
            try:
                out = merge_layers(g, DiversitySnapshot(), registry, rng)
            except (NoMergeCandidates, InvalidMutant):
                continue
            assert validate(out.mutant, registry) == []
            ok += 1
        assert ok > 5


class TestConnectLayers:
    def test_copy_keeps_original_edge(self, registry, rng):
        g = conv_bn(registry)
        snap = DiversitySnapshot()
        out = connect_layers(g, 1, snap, registry, rng)
        # original bn still consumes conv
        assert out.mutant.nodes["bn"].inputs == (("conv", 0),)
        # a new output was appended
        assert len(out.mutant.graph_outputs) == len(g.graph_outputs) + 1
        assert validate(out.mutant, registry) == []

    def test_multiple_outputs_allowed(self, registry, rng):
        g = conv_bn(registry)
        out = connect_layers(g, 3, DiversitySnapshot(), registry, rng)
        assert len(out.mutant.graph_outputs) > 1


class TestSpecialInput:
    def test_override_recorded_and_survives_roundtrip(self, registry, rng):
        g = conv_bn(registry)
        out = special_input(g, registry, rng)
        assert len(out.mutant.input_overrides) == 1
        doc = to_document(out.mutant, registry.version)
        g2 = from_document(doc, registry)
        assert g2.input_overrides == out.mutant.input_overrides

    def test_no_structural_change(self, registry, rng):
        g = conv_bn(registry)
        out = special_input(g, registry, rng)
        assert set(out.mutant.nodes) == set(g.nodes)
        assert validate(out.mutant, registry) == []


class TestPurity:
    def test_same_rng_state_same_mutant(self, registry):
        g = conv_bn(registry)
        snap = DiversitySnapshot()
        docs = []
        for _ in range(2):
            rng = np.random.default_rng(777)
            out = mshape(g, ["conv"], snap, registry, rng)
            docs.append(to_document(out.mutant, registry.version))
        assert docs[0] == docs[1]

    def test_seed_graph_never_modified(self, registry, rng):
        g = conv_bn(registry)
        before = to_document(g, registry.version)
        for fn in (mdtype, mdims, mshape, mparam):
            fn(g, ["conv"], DiversitySnapshot(), registry, rng)
        insert_layers(g, 2, DiversitySnapshot(), registry, rng)
        merge_layers(g, DiversitySnapshot(), registry, rng)
        connect_layers(g, 1, DiversitySnapshot(), registry, rng)
        special_input(g, registry, rng)
        assert to_document(g, registry.version) == before
