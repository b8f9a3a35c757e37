"""Operator registry: the closed universe of operator kinds.

Every coverage denominator (datatype buckets, accepted ranks, parameter
spaces, valid sequence pairs) derives from the registry, which is loaded
from a versioned JSON description and immutable afterwards.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .dtypes import ALL_LABELS, is_label

DEFAULT_SIGMA = 5


class RegistryError(ValueError):
    """Malformed registry description or lookup of an unknown kind/param."""


@dataclass(frozen=True)
class ParamSpec:
    """One mutable parameter of an operator kind.

    ``space_size`` is the coverage denominator: the domain length for
    categorical parameters and sigma for numeric ones.  ``kind`` 'open'
    marks utility-operator parameters that carry structural values
    (pad amounts, target shapes) and never enter coverage.
    """

    name: str
    kind: str  # "numeric" | "categorical" | "open"
    domain: tuple = ()  # categorical only; ordered, duplicate-free
    lo: float | int | None = None  # numeric only, inclusive
    hi: float | int | None = None
    sampling: str = "int"  # numeric only: "int" | "real"
    space_size: int = 1

    def __post_init__(self):
        if self.kind == "categorical":
            if len(set(self.domain)) != len(self.domain) or not self.domain:
                raise RegistryError(f"param {self.name}: bad categorical domain")
        elif self.kind == "numeric":
            if self.lo is None or self.hi is None or self.lo > self.hi:
                raise RegistryError(f"param {self.name}: bad numeric range")
        elif self.kind != "open":
            raise RegistryError(f"param {self.name}: unknown kind {self.kind}")
        if self.space_size < 1:
            raise RegistryError(f"param {self.name}: space_size < 1")

    def sample(self, rng: np.random.Generator, avoid: set | None = None):
        """Uniform value from the domain, dodging ``avoid`` when possible."""
        avoid = avoid or set()
        if self.kind == "categorical":
            fresh = [v for v in self.domain if v not in avoid]
            pool = fresh if fresh else list(self.domain)
            return pool[rng.integers(len(pool))]
        if self.kind == "numeric" and self.sampling == "int":
            fresh = [v for v in range(int(self.lo), int(self.hi) + 1) if v not in avoid]
            pool = fresh if fresh else list(range(int(self.lo), int(self.hi) + 1))
            return int(pool[rng.integers(len(pool))])
        # real interval: collisions with avoid have measure zero, retry a few times
        for _ in range(8):
            v = float(rng.uniform(self.lo, self.hi))
            if v not in avoid:
                return v
        return float(rng.uniform(self.lo, self.hi))

    def contains(self, value) -> bool:
        if self.kind == "categorical":
            return value in self.domain
        if self.kind == "numeric":
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                return False
            if self.sampling == "int" and int(value) != value:
                return False
            return self.lo <= value <= self.hi
        return True  # open


@dataclass(frozen=True)
class OperatorSchema:
    kind: str
    input_arity: tuple[int, int]
    accepted_input_ranks: frozenset[int]
    produced_output_ranks: frozenset[int]
    params: tuple[ParamSpec, ...] = ()
    accepted_dtypes: frozenset[str] = frozenset(ALL_LABELS)
    is_merging: bool = False
    is_utility: bool = False

    def __post_init__(self):
        lo, hi = self.input_arity
        if lo < 1 or hi < lo:
            raise RegistryError(f"{self.kind}: bad input_arity {self.input_arity}")
        if self.is_merging and lo < 2:
            raise RegistryError(f"{self.kind}: merging kind needs arity >= 2")
        if not self.is_merging and not self.is_utility and (lo, hi) != (1, 1):
            raise RegistryError(f"{self.kind}: non-merging compute kind must have arity 1")
        if not self.accepted_input_ranks or not self.produced_output_ranks:
            raise RegistryError(f"{self.kind}: empty rank set")
        for label in self.accepted_dtypes:
            if not is_label(label):
                raise RegistryError(f"{self.kind}: unknown dtype label {label!r}")

    def param(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise RegistryError(f"{self.kind}: unknown param {name!r}")

    @property
    def coverage_params(self) -> tuple[ParamSpec, ...]:
        return tuple(p for p in self.params if p.kind != "open")

    def default_params(self) -> dict:
        """First categorical value / range low as the default assignment."""
        out = {}
        for p in self.params:
            if p.kind == "categorical":
                out[p.name] = p.domain[0]
            elif p.kind == "numeric":
                out[p.name] = int(p.lo) if p.sampling == "int" else float(p.lo)
        return out


@dataclass(frozen=True)
class Registry:
    version: str
    schemas: dict[str, OperatorSchema] = field(default_factory=dict)

    def schema(self, kind: str) -> OperatorSchema:
        try:
            return self.schemas[kind]
        except KeyError:
            raise RegistryError(f"unknown operator kind: {kind!r}") from None

    @property
    def compute_kinds(self) -> list[str]:
        return [k for k, s in self.schemas.items() if not s.is_utility]

    @property
    def utility_kinds(self) -> list[str]:
        return [k for k, s in self.schemas.items() if s.is_utility]

    @property
    def merging_kinds(self) -> list[str]:
        return [k for k, s in self.schemas.items() if s.is_merging and not s.is_utility]

    @property
    def n_layer(self) -> int:
        return len(self.compute_kinds)


def _parse_param(raw: dict, sigma: int) -> ParamSpec:
    kind = raw.get("kind", "categorical")
    if kind == "categorical":
        domain = tuple(None if v is None else v for v in raw["domain"])
        return ParamSpec(raw["name"], "categorical", domain=domain, space_size=len(domain))
    if kind == "numeric":
        lo, hi = raw["range"]
        return ParamSpec(
            raw["name"], "numeric", lo=lo, hi=hi,
            sampling=raw.get("sampling", "int"), space_size=sigma,
        )
    if kind == "open":
        return ParamSpec(raw["name"], "open")
    raise RegistryError(f"param {raw.get('name')}: unknown kind {kind!r}")


def load_registry(source: str | Path | dict, sigma: int = DEFAULT_SIGMA) -> Registry:
    """Parse a registry description document into an immutable Registry.

    ``source`` may be a path to a JSON file or an already-decoded mapping.
    ``sigma`` sets the coverage space size of every numeric parameter.
    """
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text())
        except json.JSONDecodeError as e:
            raise RegistryError(f"malformed registry document: {e}") from e
    else:
        doc = source
    if not isinstance(doc, dict) or "registry_version" not in doc:
        raise RegistryError("registry document missing registry_version")

    schemas: dict[str, OperatorSchema] = {}
    for raw in doc.get("schemas", []):
        kind = raw["kind"]
        if kind in schemas:
            raise RegistryError(f"duplicate kind: {kind}")
        arity = raw.get("input_arity", [1, 1])
        dtypes = raw.get("accepted_dtypes")
        schemas[kind] = OperatorSchema(
            kind=kind,
            input_arity=(int(arity[0]), int(arity[1])),
            accepted_input_ranks=frozenset(int(r) for r in raw["accepted_input_ranks"]),
            produced_output_ranks=frozenset(int(r) for r in raw["produced_output_ranks"]),
            params=tuple(_parse_param(p, sigma) for p in raw.get("params", [])),
            accepted_dtypes=frozenset(dtypes) if dtypes else frozenset(ALL_LABELS),
            is_merging=bool(raw.get("is_merging", False)),
            is_utility=bool(raw.get("is_utility", False)),
        )
    return Registry(version=str(doc["registry_version"]), schemas=schemas)


def default_registry(sigma: int = DEFAULT_SIGMA) -> Registry:
    """The registry shipped with the package (18 compute + 4 utility kinds)."""
    with resources.files("tgfuzz.data").joinpath("default_registry.json").open() as f:
        return load_registry(json.load(f), sigma=sigma)


def valid_sequence(a: str, b: str, registry: Registry) -> bool:
    """True iff some output rank of ``a`` is an accepted input rank of ``b``."""
    sa, sb = registry.schema(a), registry.schema(b)
    return bool(sa.produced_output_ranks & sb.accepted_input_ranks)


def sequence_space_size(registry: Registry) -> int:
    """Number of ordered compute-kind pairs that form a valid sequence."""
    kinds = registry.compute_kinds
    return sum(
        1 for a in kinds for b in kinds if valid_sequence(a, b, registry)
    )


def sample_param_value(schema: OperatorSchema, param_name: str, avoid: set,
                       rng: np.random.Generator):
    """Value from the param's domain, avoiding ``avoid`` when possible."""
    return schema.param(param_name).sample(rng, avoid)
