"""Mutation-operator scheduling: per-operator fitness and Metropolis-
Hastings selection over a geometric target distribution, plus the
bounded seed-model pool.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .graph import ModelGraph
from .mutate import MUTATION_KINDS

P_RECOMMENDED_RANGE = (0.313, 0.598)


def score(diverse_bit: int, branch_bit: int, lam: float = 0.5) -> float:
    """lam * diverse + (1 - lam) * branch."""
    return lam * diverse_bit + (1.0 - lam) * branch_bit


@dataclass
class OperatorStats:
    kind: str
    scores: list[float] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.scores)

    @property
    def fitness(self) -> float:
        """Mean mutant score; unused operators get the optimistic prior 1.0
        so every operator is tried early."""
        if not self.scores:
            return 1.0
        return sum(self.scores) / len(self.scores)


def new_stats() -> dict[str, OperatorStats]:
    return {k: OperatorStats(k) for k in MUTATION_KINDS}


def sorted_kinds(stats: dict[str, OperatorStats]) -> list[str]:
    """Kinds by descending fitness; ties break on the fixed kind order."""
    return sorted(
        MUTATION_KINDS,
        key=lambda k: (-stats[k].fitness, MUTATION_KINDS.index(k)),
    )


def acceptance_probability(k1: int, k2: int, p: float) -> float:
    """min(1, (1-p)^(k2-k1)) over 1-based fitness-sorted indices."""
    return min(1.0, (1.0 - p) ** (k2 - k1))


def select_operator(stats: dict[str, OperatorStats], last_kind: str | None,
                    p: float, rng: np.random.Generator) -> str:
    """Repeatedly draw a uniform candidate until one is accepted."""
    order = sorted_kinds(stats)
    k1 = order.index(last_kind) + 1 if last_kind in order else 1
    while True:
        cand = order[int(rng.integers(len(order)))]
        k2 = order.index(cand) + 1
        if rng.random() < acceptance_probability(k1, k2, p):
            return cand


def check_p(p: float) -> None:
    lo, hi = P_RECOMMENDED_RANGE
    if not (lo <= p <= hi):
        warnings.warn(
            f"p={p} outside the recommended range [{lo}, {hi}] for 8 seeds",
            stacklevel=2)


@dataclass
class ModelPool:
    capacity: int = 50
    members: list[ModelGraph] = field(default_factory=list)

    def add(self, graph: ModelGraph, rng: np.random.Generator) -> None:
        """Insert, evicting one uniformly random member when full."""
        if len(self.members) >= self.capacity:
            self.members.pop(int(rng.integers(len(self.members))))
        self.members.append(graph)

    def pick(self, rng: np.random.Generator) -> ModelGraph:
        return self.members[int(rng.integers(len(self.members)))]

    def __len__(self) -> int:
        return len(self.members)
