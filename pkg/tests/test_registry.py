import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tgfuzz.registry import (RegistryError, load_registry, sample_param_value,
                             sequence_space_size, valid_sequence)


def _mini_registry(schemas):
    return load_registry({"registry_version": "t", "schemas": schemas})


def _kind(kind, out_ranks, in_ranks, **kw):
    return {
        "kind": kind,
        "accepted_input_ranks": in_ranks,
        "produced_output_ranks": out_ranks,
        "params": kw.pop("params", []),
        **kw,
    }


class TestLoadRegistry:
    def test_default_counts(self, registry):
        assert len(registry.compute_kinds) == 18
        assert len(registry.utility_kinds) == 4
        assert registry.n_layer == 18

    def test_empty_compute_universe(self):
        reg = _mini_registry([_kind("Cast", [1, 2], [1, 2], is_utility=True)])
        assert reg.n_layer == 0
        assert sequence_space_size(reg) == 0

    def test_duplicate_kind_rejected(self):
        with pytest.raises(RegistryError, match="duplicate"):
            _mini_registry([_kind("A", [2], [2]), _kind("A", [2], [2])])

    def test_empty_rank_set_rejected(self):
        with pytest.raises(RegistryError, match="rank"):
            _mini_registry([_kind("A", [], [2])])

    def test_merging_arity_enforced(self):
        with pytest.raises(RegistryError, match="arity"):
            _mini_registry([_kind("M", [2], [2], is_merging=True,
                                  input_arity=[1, 2])])

    def test_registry_immutable(self, registry):
        import dataclasses

        with pytest.raises(dataclasses.FrozenInstanceError):
            registry.schema("Conv2D").kind = "Other"


class TestValidSequence:
    def test_nonempty_intersection(self):
        reg = _mini_registry([_kind("A", [4], [4]), _kind("B", [2], [3, 4, 5])])
        assert valid_sequence("A", "B", reg)

    def test_rank5_into_rank4_invalid(self):
        # the 3-D conv into 2-D conv case: emitted rank 5 never accepted
        reg = _mini_registry([_kind("C3", [5], [5]), _kind("C2", [4], [4])])
        assert not valid_sequence("C3", "C2", reg)

    def test_reflexive_pair_allowed(self):
        reg = _mini_registry([_kind("A", [2], [2])])
        assert valid_sequence("A", "A", reg)

    def test_pooling_into_conv_rank_gap(self, registry):
        # GlobalAveragePooling2D can emit rank 4 (keepdims), so the pair is
        # valid; Flatten only emits rank 2 and cannot feed Conv2D
        assert valid_sequence("GlobalAveragePooling2D", "Conv2D", registry)
        assert not valid_sequence("Flatten", "Conv2D", registry)

    def test_unknown_kind(self, registry):
        with pytest.raises(RegistryError):
            valid_sequence("Conv2D", "Nope", registry)


class TestSequenceSpaceSize:
    def test_three_kind_example(self):
        # A: out {4} in {4}; B: out {2} in {4}; C: out {4} in {2,4}
        # all ordered pairs valid except B->A and B->B
        reg = _mini_registry([
            _kind("A", [4], [4]),
            _kind("B", [2], [4]),
            _kind("C", [4], [2, 4]),
        ])
        brute = sum(
            1 for a in reg.compute_kinds for b in reg.compute_kinds
            if reg.schema(a).produced_output_ranks & reg.schema(b).accepted_input_ranks
        )
        assert brute == 7
        assert sequence_space_size(reg) == 7

    def test_single_self_compatible_kind(self):
        reg = _mini_registry([_kind("A", [2], [2])])
        assert sequence_space_size(reg) == 1

    def test_matches_bruteforce_on_default(self, registry):
        brute = 0
        for a in registry.compute_kinds:
            for b in registry.compute_kinds:
                sa = registry.schema(a).produced_output_ranks
                sb = registry.schema(b).accepted_input_ranks
                brute += 1 if (sa & sb) else 0
        assert sequence_space_size(registry) == brute

    def test_utility_kinds_excluded(self, registry):
        assert "Cast" not in registry.compute_kinds
        # Cast accepts every rank, so its exclusion must matter
        n = sequence_space_size(registry)
        assert n < (registry.n_layer + 4) ** 2


class TestSampleParamValue:
    def test_categorical_avoids(self, registry, rng):
        schema = registry.schema("Conv2D")
        for _ in range(50):
            v = sample_param_value(schema, "activation", {"relu"}, rng)
            assert v in ("linear", "sigmoid", "tanh")

    def test_numeric_in_range(self, registry, rng):
        schema = registry.schema("Conv2D")
        for _ in range(50):
            v = sample_param_value(schema, "strides", set(), rng)
            assert 1 <= v <= 3

    def test_exhausted_avoid_falls_back(self, registry, rng):
        schema = registry.schema("Conv2D")
        whole = {"valid", "same"}
        v = sample_param_value(schema, "padding", whole, rng)
        assert v in whole

    def test_unknown_param(self, registry, rng):
        with pytest.raises(RegistryError):
            sample_param_value(registry.schema("Conv2D"), "nope", set(), rng)

    @settings(max_examples=60, deadline=None)
    @given(domain=st.lists(st.integers(0, 30), min_size=2, max_size=8,
                           unique=True),
           data=st.data())
    def test_never_returns_avoided_when_fresh_exists(self, domain, data):
        reg = _mini_registry([_kind("K", [2], [2], params=[
            {"name": "p", "kind": "categorical", "domain": domain}])])
        avoid = set(data.draw(st.lists(st.sampled_from(domain),
                                       max_size=len(domain) - 1)))
        rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
        v = sample_param_value(reg.schema("K"), "p", avoid, rng)
        assert v in domain
        if len(avoid) < len(domain):
            assert v not in avoid
