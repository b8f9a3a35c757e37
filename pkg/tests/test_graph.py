import numpy as np
import pytest

from tgfuzz.generate import random_graph
from tgfuzz.graph import GraphError, LayerNode, ModelGraph, TensorSpec, validate
from tgfuzz.infer import InferenceFailure, infer_specs
from tgfuzz.model_io import ModelFormatError, deserialize, from_document, serialize, to_document
from tgfuzz.weights import materialize_weights


def chain(registry, *nodes, in_spec=("float32", (5, 8, 8, 3)), seed=42):
    """Small helper: linear graph from (id, kind, params) triples."""
    node_map = {}
    prev = "in0"
    for nid, kind, params in nodes:
        node_map[nid] = LayerNode(nid, kind, in_spec[0], params, ((prev, 0),))
        prev = nid
    g = ModelGraph(
        graph_inputs=[("in0", TensorSpec(*in_spec))],
        nodes=node_map,
        graph_outputs=[(prev, 0)],
        weight_seed=seed,
    )
    return infer_specs(g, registry)


CONV = {"filters": 2, "kernel_size": 3, "strides": 1, "padding": "valid",
        "dilation_rate": 1, "activation": "linear", "use_bias": True}


class TestValidate:
    def _add_graph(self, registry, shape_b):
        g = ModelGraph(
            graph_inputs=[("a", TensorSpec("float32", (5, 6, 6, 2))),
                          ("b", TensorSpec("float32", shape_b))],
            nodes={"add": LayerNode("add", "Add", "float32", {},
                                    (("a", 0), ("b", 0)))},
            graph_outputs=[("add", 0)],
        )
        g.specs = {"add": TensorSpec("float32", (5, 6, 6, 2))}
        return g

    def test_add_same_shapes_ok(self, registry):
        assert validate(self._add_graph(registry, (5, 6, 6, 2)), registry) == []

    def test_add_mismatched_shapes_violates(self, registry):
        v = validate(self._add_graph(registry, (5, 3, 3, 2)), registry)
        assert any(x.constraint == "shape" for x in v)

    def test_conv_rank3_violates_dimension(self, registry):
        g = ModelGraph(
            graph_inputs=[("in0", TensorSpec("float32", (5, 8, 3)))],
            nodes={"c": LayerNode("c", "Conv2D", "float32", CONV, (("in0", 0),))},
            graph_outputs=[("c", 0)],
        )
        g.specs = {"c": TensorSpec("float32", (5, 6, 2))}
        v = validate(g, registry)
        assert any(x.constraint == "dimension" for x in v)

    def test_dtype_mismatch_violates(self, registry):
        g = ModelGraph(
            graph_inputs=[("in0", TensorSpec("float16", (5, 8, 8, 3)))],
            nodes={"c": LayerNode("c", "Conv2D", "float32", CONV, (("in0", 0),))},
            graph_outputs=[("c", 0)],
        )
        g.specs = {"c": TensorSpec("float32", (5, 6, 6, 2))}
        v = validate(g, registry)
        assert any(x.constraint == "datatype" for x in v)

    def test_input_degree_violation(self, registry):
        g = ModelGraph(
            graph_inputs=[("in0", TensorSpec("float32", (5, 6, 6, 2)))],
            nodes={"add": LayerNode("add", "Add", "float32", {}, (("in0", 0),))},
            graph_outputs=[("add", 0)],
        )
        g.specs = {"add": TensorSpec("float32", (5, 6, 6, 2))}
        v = validate(g, registry)
        assert any(x.constraint == "input_degree" for x in v)

    def test_cycle_is_structural_violation(self, registry):
        g = ModelGraph(
            graph_inputs=[("in0", TensorSpec("float32", (5, 4)))],
            nodes={
                "a": LayerNode("a", "ReLU", "float32",
                               {"max_value": None, "negative_slope": 0.0,
                                "threshold": 0.0}, (("b", 0),)),
                "b": LayerNode("b", "ReLU", "float32",
                               {"max_value": None, "negative_slope": 0.0,
                                "threshold": 0.0}, (("a", 0),)),
            },
            graph_outputs=[("a", 0)],
        )
        v = validate(g, registry)
        assert v and v[0].constraint == "structure"

    def test_duplicate_edges_topo_sort(self, registry):
        # a merge fed the same producer twice is legal and must sort
        g = ModelGraph(
            graph_inputs=[("in0", TensorSpec("float32", (2, 4)))],
            nodes={
                "d": LayerNode("d", "Dense", "float32",
                               {"units": 4, "activation": "linear",
                                "use_bias": True}, (("in0", 0),)),
                "m": LayerNode("m", "Add", "float32", {},
                               (("d", 0), ("d", 0))),
            },
            graph_outputs=[("m", 0)],
        )
        g = infer_specs(g, registry)
        assert g.topo_order() == ["d", "m"]
        assert validate(g, registry) == []


class TestInferSpecs:
    def test_conv2d_valid_example(self, registry):
        g = chain(registry, ("c", "Conv2D", CONV))
        assert g.specs["c"].shape == (5, 6, 6, 2)

    def test_dense_replaces_last_extent(self, registry):
        g = chain(registry,
                  ("d", "Dense", {"units": 4, "activation": "linear",
                                  "use_bias": True}),
                  in_spec=("float32", (5, 16)))
        assert g.specs["d"].shape == (5, 4)

    def test_maxpool_valid(self, registry):
        g = chain(registry,
                  ("p", "MaxPooling2D", {"pool_size": 2, "strides": 2,
                                         "padding": "valid"}),
                  in_spec=("float32", (1, 7, 7, 1)))
        # floor((7-2)/2) + 1 = 3, derived by hand
        assert g.specs["p"].shape == (1, 3, 3, 1)

    def test_same_padding_ceil(self, registry):
        g = chain(registry, ("c", "Conv2D", {**CONV, "padding": "same",
                                             "strides": 2}))
        assert g.specs["c"].shape == (5, 4, 4, 2)

    def test_concatenate_sums_axis(self, registry):
        g = ModelGraph(
            graph_inputs=[("a", TensorSpec("float32", (2, 3, 4))),
                          ("b", TensorSpec("float32", (2, 3, 4)))],
            nodes={"c": LayerNode("c", "Concatenate", "float32", {"axis": -1},
                                  (("a", 0), ("b", 0)))},
            graph_outputs=[("c", 0)],
        )
        g = infer_specs(g, registry)
        assert g.specs["c"].shape == (2, 3, 8)

    def test_kernel_too_large_fails(self, registry):
        with pytest.raises(InferenceFailure):
            chain(registry, ("c", "Conv2D", {**CONV, "kernel_size": 5,
                                             "dilation_rate": 3}),
                  in_spec=("float32", (5, 8, 8, 3)))

    def test_dense_zero_units_propagates_zero_extent(self, registry):
        g = chain(registry,
                  ("d", "Dense", {"units": 0, "activation": "linear",
                                  "use_bias": True}),
                  in_spec=("float32", (5, 16)))
        assert g.specs["d"].shape == (5, 0)

    def test_deterministic(self, registry, rng):
        g = random_graph(registry, rng, n_nodes=8)
        a = infer_specs(g, registry).specs
        b = infer_specs(g, registry).specs
        assert a == b


class TestWeights:
    def test_bit_identical_across_calls(self, registry):
        g = chain(registry, ("c", "Conv2D", CONV))
        w1 = materialize_weights(g, "c")
        w2 = materialize_weights(g, "c")
        for a, b in zip(w1, w2):
            assert np.array_equal(a.data, b.data)

    def test_seed_sensitivity(self, registry):
        g1 = chain(registry, ("c", "Conv2D", CONV), seed=1)
        g2 = chain(registry, ("c", "Conv2D", CONV), seed=2)
        assert not np.array_equal(materialize_weights(g1, "c")[0].data,
                                  materialize_weights(g2, "c")[0].data)

    def test_dense_shapes(self, registry):
        g = chain(registry,
                  ("d", "Dense", {"units": 4, "activation": "linear",
                                  "use_bias": True}),
                  in_spec=("float32", (5, 16)))
        kernel, bias = materialize_weights(g, "d")
        assert kernel.data.size == 64 and bias.data.size == 4

    def test_range_bounded(self, registry):
        g = chain(registry, ("c", "Conv2D", CONV))
        for vt in materialize_weights(g, "c"):
            assert np.all(np.abs(vt.data) <= 0.5 + 1e-6)

    def test_variance_positive(self, registry):
        g = chain(registry, ("b", "BatchNormalization",
                             {"epsilon": 1e-3, "center": True, "scale": True}))
        var = materialize_weights(g, "b")[-1]
        assert np.all(var.data > 0)


class TestSerde:
    def test_roundtrip_random_graphs(self, registry, rng, tmp_path):
        for i in range(1000):
            g = random_graph(registry, rng, n_nodes=int(rng.integers(1, 8)))
            doc = to_document(g, registry.version)
            g2 = from_document(doc, registry)
            assert to_document(infer_specs(g2, registry), registry.version) == doc

    def test_file_roundtrip(self, registry, tmp_path, rng):
        g = random_graph(registry, rng, n_nodes=6)
        path = tmp_path / "m.json"
        serialize(g, path, registry.version)
        g2 = deserialize(path, registry)
        assert to_document(g, registry.version) == to_document(
            infer_specs(g2, registry), registry.version)

    def test_unknown_kind_error(self, registry):
        doc = {"format_version": 1, "registry_version": registry.version,
               "weight_seed": 0,
               "inputs": [{"name": "in0", "dtype": "float32", "shape": [2, 4]}],
               "nodes": [{"id": "x", "kind": "Nope", "dtype": "float32",
                          "params": {}, "inputs": [["in0", 0]]}],
               "outputs": [["x", 0]]}
        from tgfuzz.registry import RegistryError

        with pytest.raises(RegistryError):
            from_document(doc, registry)

    def test_empty_graph_roundtrip(self, registry):
        g = ModelGraph(
            graph_inputs=[("in0", TensorSpec("float32", (2, 4)))],
            nodes={}, graph_outputs=[], weight_seed=7)
        doc = to_document(g, registry.version)
        g2 = from_document(doc, registry)
        assert g2.nodes == {} and g2.weight_seed == 7

    def test_version_mismatch(self, registry):
        doc = {"format_version": 99, "registry_version": registry.version,
               "weight_seed": 0, "inputs": [], "nodes": [], "outputs": []}
        with pytest.raises(ModelFormatError):
            from_document(doc, registry)

    def test_corrupt_file(self, registry, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        with pytest.raises(ModelFormatError):
            deserialize(path, registry)

    def test_override_roundtrip(self, registry, rng):
        g = random_graph(registry, rng, n_nodes=4)
        nid = next(iter(g.nodes))
        g.input_overrides[nid] = "nan"
        doc = to_document(g, registry.version)
        g2 = from_document(doc, registry)
        assert g2.input_overrides == {nid: "nan"}
