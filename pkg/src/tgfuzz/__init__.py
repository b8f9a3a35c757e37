"""tgfuzz: coverage-guided differential fuzzing for tensor-graph runtimes.

Generates computation graphs with deliberately diverse operator calls,
schedules mutations with a Metropolis-Hastings search over a
coverage-based fitness, and executes every mutant on independent
backends to catch crash, NaN, and numerical-inconsistency bugs.
"""

from .campaign import CampaignConfig, CampaignResult, run_campaign
from .diversity import (BehaviorCoverage, CoverageConfig, DiversitySnapshot,
                        collect_diversity, cov_input, cov_param, cov_sequence,
                        diversity_gain, record_behavior)
from .graph import LayerNode, ModelGraph, TensorSpec, validate
from .infer import InferenceFailure, infer_specs
from .model_io import deserialize, read_sidecar, serialize, write_sidecar
from .mutate import (MUTATION_KINDS, InvalidMutant, MutationOutcome,
                     NoMergeCandidates, apply_mutation, pick_targets)
from .registry import (OperatorSchema, ParamSpec, Registry, default_registry,
                       load_registry, sample_param_value, sequence_space_size,
                       valid_sequence)
from .schedule import (ModelPool, OperatorStats, acceptance_probability,
                       score, select_operator)
from .synthesize import SynthesisReport, synthesize
from .verdict import Verdict, collapse_outputs, d_mad, run_differential
from .weights import ValueTensor, materialize_weights

__version__ = "0.1.0"

__all__ = [
    "BehaviorCoverage", "CampaignConfig", "CampaignResult", "CoverageConfig",
    "DiversitySnapshot", "InferenceFailure", "InvalidMutant", "LayerNode",
    "MUTATION_KINDS", "ModelGraph", "ModelPool", "MutationOutcome",
    "NoMergeCandidates", "OperatorSchema", "OperatorStats", "ParamSpec",
    "Registry", "SynthesisReport", "TensorSpec", "ValueTensor", "Verdict",
    "acceptance_probability", "apply_mutation", "collapse_outputs",
    "collect_diversity", "cov_input", "cov_param", "cov_sequence", "d_mad",
    "default_registry", "deserialize", "diversity_gain", "infer_specs",
    "load_registry", "materialize_weights", "pick_targets", "read_sidecar",
    "record_behavior", "run_campaign", "run_differential",
    "sample_param_value", "score", "select_operator", "sequence_space_size",
    "serialize", "synthesize", "valid_sequence", "validate", "write_sidecar",
]
