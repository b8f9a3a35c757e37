"""The fuzzing campaign: select operator, mutate a pooled seed, execute
differentially, score, and fold results into coverage, the operator
stats, the model pool, and the unique-bug map.

Budgets: ``time_budget_seconds`` bounds wall time; ``max_iterations``
bounds the loop deterministically.  Byte-identical artifacts across runs
require the iteration bound to be the binding one, so the coverage export
carries a virtual timestamp (the iteration index), never wall time.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .backends import make_backend
from .dedup import BugRecord, Deduper
from .diversity import (BehaviorCoverage, CoverageConfig, DiversitySnapshot,
                        collect_diversity, coverage_summary, diversity_gain,
                        record_behavior)
from .generate import random_graph
from .graph import ModelGraph
from .model_io import deserialize, serialize
from .mutate import InvalidMutant, NoMergeCandidates, apply_mutation
from .registry import Registry, default_registry
from .schedule import (ModelPool, check_p, new_stats, score, select_operator)
from .synthesize import synthesize
from .verdict import run_differential


@dataclass
class CampaignConfig:
    time_budget_seconds: float = 300.0
    max_iterations: int | None = None
    rng_seed: int = 0
    lam: float = 0.5
    p: float = 0.4
    pool_capacity: int = 50
    sigma: int = 5
    n_shape: int = 5
    threshold: float = 0.4
    backends: list[str] = field(default_factory=lambda: ["eager", "fused"])
    initial_seeds: list[str] = field(default_factory=list)
    synthesize_first: bool = True
    n_generated_seeds: int = 5
    scheduler: str = "mcmc"  # mcmc | random
    out_dir: str | None = None
    stop_on_bug_kind: str | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> "CampaignConfig":
        doc = json.loads(Path(path).read_text())
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class CampaignResult:
    iterations: int = 0
    invalid_mutants: int = 0
    models_generated: int = 0
    bug_records: list[BugRecord] = field(default_factory=list)
    coverage_rows: list[tuple] = field(default_factory=list)
    final_summary: dict = field(default_factory=dict)
    out_dir: str | None = None
    stats: dict = field(default_factory=dict)
    pool_size: int = 0


CSV_HEADER = "virtual_time,iteration,cov_input_mean,cov_param_mean,cov_sequence,behavior_paths"


def _coverage_row(iteration: int, snap: DiversitySnapshot,
                  behavior: BehaviorCoverage, cfg: CoverageConfig,
                  registry: Registry) -> tuple:
    s = coverage_summary(snap, behavior, cfg, registry)
    return (iteration, iteration, f"{s['cov_input_mean']:.6f}",
            f"{s['cov_param_mean']:.6f}", f"{s['cov_sequence']:.6f}",
            s["behavior_paths"])


def _load_seeds(config: CampaignConfig, registry: Registry,
                rng: np.random.Generator, log) -> list[ModelGraph]:
    seeds = []
    for path in config.initial_seeds:
        seeds.append(deserialize(path, registry))
        log(f"loaded seed {path}")
    if not seeds:
        for i in range(config.n_generated_seeds):
            seeds.append(random_graph(registry, rng,
                                      n_nodes=int(rng.integers(5, 13))))
        log(f"generated {len(seeds)} random seeds")
    if config.synthesize_first:
        synthesized = []
        for i, g in enumerate(seeds):
            s, report = synthesize(g, registry, rng)
            log(f"synthesized seed {i}: {report.original_stats['nodes']} -> "
                f"{report.synthesized_stats['nodes']} nodes, "
                f"residual={len(report.residual)}")
            synthesized.append(s if not report.residual else g)
        seeds = synthesized
    return seeds


def run_campaign(config: CampaignConfig,
                 registry: Registry | None = None) -> CampaignResult:
    registry = registry or default_registry(sigma=config.sigma)
    check_p(config.p)
    out_dir = Path(config.out_dir) if config.out_dir else None
    log_lines: list[str] = []

    def log(msg: str) -> None:
        log_lines.append(f"[{time.strftime('%H:%M:%S')}] {msg}")

    rng = np.random.default_rng(np.random.SeedSequence(config.rng_seed))
    backends = [make_backend(b, registry) for b in config.backends]
    cov_cfg = CoverageConfig(n_shape=config.n_shape, sigma=config.sigma)
    deduper = Deduper(registry, backends, config.threshold)

    if out_dir:
        (out_dir / "models").mkdir(parents=True, exist_ok=True)
        (out_dir / "bugs").mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(
            json.dumps(asdict(config), indent=2, sort_keys=True) + "\n")

    seeds = _load_seeds(config, registry, rng, log)
    cumulative = DiversitySnapshot()
    behavior = BehaviorCoverage()
    stats = new_stats()
    pool = ModelPool(capacity=config.pool_capacity)
    result = CampaignResult(out_dir=str(out_dir) if out_dir else None)
    rows: list[tuple] = []

    for i, g in enumerate(seeds):
        cumulative.merge(collect_diversity(g, registry))
        verdict = run_differential(g, None, backends, config.threshold,
                                   capture=True)
        paths = set()
        for o in verdict.outcomes.values():
            paths |= o.behavior
        record_behavior(paths, behavior)
        if verdict.is_bug:
            _record_bug(deduper, verdict, g, 0, out_dir, result, log, registry)
        pool.add(g, rng)
        if out_dir:
            serialize(g, out_dir / "models" / f"seed_{i:03d}.json",
                      registry.version)
    rows.append(_coverage_row(0, cumulative, behavior, cov_cfg, registry))

    start = time.monotonic()
    last_kind: str | None = None
    iteration = 0
    stop = bool(config.stop_on_bug_kind) and any(
        r.verdict_kind == config.stop_on_bug_kind for r in result.bug_records)
    while not stop:
        if config.max_iterations is not None and iteration >= config.max_iterations:
            break
        if time.monotonic() - start >= config.time_budget_seconds:
            break
        iteration += 1
        if config.scheduler == "random":
            from .mutate import MUTATION_KINDS

            op = MUTATION_KINDS[int(rng.integers(len(MUTATION_KINDS)))]
        else:
            op = select_operator(stats, last_kind, config.p, rng)
        last_kind = op
        seed_model = pool.pick(rng)
        try:
            outcome = apply_mutation(op, seed_model, cumulative, registry, rng,
                                     n_shape=config.n_shape)
        except (InvalidMutant, NoMergeCandidates):
            result.invalid_mutants += 1
            rows.append(_coverage_row(iteration, cumulative, behavior,
                                      cov_cfg, registry))
            continue
        mutant = outcome.mutant
        result.models_generated += 1

        verdict = run_differential(mutant, None, backends, config.threshold,
                                   capture=True)
        paths = set()
        for o in verdict.outcomes.values():
            paths |= o.behavior
        branch_bit, _ = record_behavior(paths, behavior)
        snap = collect_diversity(mutant, registry)
        diverse_bit = bool(diversity_gain(snap, cumulative))
        cumulative.merge(snap)

        s = score(int(diverse_bit), int(branch_bit), config.lam)
        stats[op].scores.append(s)
        if s > 0:
            pool.add(mutant, rng)
        if verdict.is_bug:
            _record_bug(deduper, verdict, mutant, iteration, out_dir,
                        result, log, registry)
        if config.stop_on_bug_kind and any(
                r.verdict_kind == config.stop_on_bug_kind
                for r in result.bug_records):
            stop = True
        rows.append(_coverage_row(iteration, cumulative, behavior, cov_cfg,
                                  registry))

    result.iterations = iteration
    result.coverage_rows = rows
    result.stats = {k: {"count": v.count, "fitness": v.fitness}
                    for k, v in stats.items()}
    result.pool_size = len(pool)
    result.final_summary = coverage_summary(cumulative, behavior, cov_cfg,
                                            registry)
    result.final_summary["unique_bugs"] = len(result.bug_records)
    result.final_summary["iterations"] = iteration
    result.final_summary["models_generated"] = result.models_generated
    result.final_summary["invalid_mutants"] = result.invalid_mutants
    log(f"done: {iteration} iterations, {result.models_generated} models, "
        f"{len(result.bug_records)} unique bugs")

    for b in backends:
        b.close()

    if out_dir:
        csv = [CSV_HEADER] + [",".join(str(c) for c in r) for r in rows]
        (out_dir / "coverage.csv").write_text("\n".join(csv) + "\n")
        (out_dir / "bugs.json").write_text(json.dumps(
            [_record_doc(r) for r in result.bug_records],
            indent=2, sort_keys=True) + "\n")
        (out_dir / "summary.json").write_text(
            json.dumps(result.final_summary, indent=2, sort_keys=True) + "\n")
        (out_dir / "campaign.log").write_text("\n".join(log_lines) + "\n")
    return result


def _record_bug(deduper, verdict, graph, iteration, out_dir, result, log,
                registry) -> bool:
    is_new, record = deduper.observe(verdict, graph, iteration)
    if not is_new:
        return False
    idx = len(result.bug_records)
    if out_dir:
        path = out_dir / "bugs" / f"bug_{idx:04d}_{verdict.kind}.json"
        serialize(graph, path, registry.version)
        record.model_path = str(path)
    result.bug_records.append(record)
    log(f"new {verdict.kind} bug #{idx}: {record.dedup_key}")
    return True


def _record_doc(r: BugRecord) -> dict:
    return {
        "dedup_key": list(r.dedup_key),
        "verdict_kind": r.verdict_kind,
        "backends": list(r.backend_ids),
        "d_mad": r.d_mad,
        "minimal_trigger": r.minimal_trigger,
        "model_path": r.model_path,
        "first_iteration": r.first_iteration,
    }
