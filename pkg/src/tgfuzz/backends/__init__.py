"""Backend abstraction for differential execution.

A backend builds a model graph into an executable handle and runs it on
concrete inputs, reporting output tensors plus a set of opaque behavior
path ids (the desk-scale stand-in for library branch coverage).  Build
and run failures are reported as values so the harness can turn them
into verdicts instead of dying.
"""

from __future__ import annotations

import traceback
from dataclasses import dataclass, field

from ..graph import ModelGraph
from ..weights import ValueTensor


@dataclass
class BuildFailure(Exception):
    trace: str

    def __str__(self):
        return f"BuildFailure: {self.trace.splitlines()[-1] if self.trace else ''}"


@dataclass
class RunFailure(Exception):
    trace: str

    def __str__(self):
        return f"RunFailure: {self.trace.splitlines()[-1] if self.trace else ''}"


class Backend:
    """Contract: deterministic build/execute; behavior set non-empty on
    successful execution of a non-empty graph."""

    id: str = "backend"

    def build(self, graph: ModelGraph, weight_overrides=None):
        raise NotImplementedError

    def execute(self, handle, inputs: list[ValueTensor]) -> tuple[list[ValueTensor], set]:
        raise NotImplementedError

    def close(self):
        pass


@dataclass
class BackendOutcome:
    """What one backend did with one model."""

    backend_id: str
    status: str  # ok | build_failure | run_failure
    outputs: list[ValueTensor] = field(default_factory=list)
    behavior: set = field(default_factory=set)
    trace: str = ""
    node_values: dict = field(default_factory=dict)  # only when captured

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def run_backend(backend: Backend, graph: ModelGraph,
                inputs: list[ValueTensor], capture: bool = False) -> BackendOutcome:
    """Drive one backend through build+execute, catching failures."""
    try:
        handle = backend.build(graph)
    except BuildFailure as e:
        return BackendOutcome(backend.id, "build_failure", trace=e.trace)
    except Exception:
        return BackendOutcome(backend.id, "build_failure", trace=traceback.format_exc())
    try:
        if capture and hasattr(backend, "execute_captured"):
            outputs, behavior, values = backend.execute_captured(handle, inputs)
            return BackendOutcome(backend.id, "ok", outputs, behavior,
                                  node_values=values)
        outputs, behavior = backend.execute(handle, inputs)
        return BackendOutcome(backend.id, "ok", outputs, behavior)
    except RunFailure as e:
        return BackendOutcome(backend.id, "run_failure", trace=e.trace)
    except Exception:
        return BackendOutcome(backend.id, "run_failure", trace=traceback.format_exc())


def make_backend(spec: str, registry) -> Backend:
    """Instantiate a backend from its id string.

    Recognized forms: "eager", "fused", "faulty:<fault_id>",
    "bridge:<command line>" (out-of-process protocol server).
    """
    from .eager import EagerBackend
    from .faulty import FaultyBackend
    from .fused import FusedBackend

    if spec == "eager":
        return EagerBackend(registry)
    if spec == "fused":
        return FusedBackend(registry)
    if spec.startswith("faulty:"):
        return FaultyBackend(registry, spec.split(":", 1)[1])
    if spec.startswith("bridge:"):
        from .remote import BridgeBackend

        return BridgeBackend(spec.split(":", 1)[1], registry)
    raise ValueError(f"unknown backend id: {spec!r}")
