"""Command-line surface: synthesize, fuzz, replay, report, list-faults.

Exit codes: 0 clean, 1 config/usage error, 2 bugs found (replay of a bug
model also exits 2 so CI can gate on it), 3 synthesis finished with a
non-empty residual.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .backends import make_backend
from .campaign import CSV_HEADER, CampaignConfig, run_campaign
from .model_io import ModelFormatError, deserialize, read_sidecar, serialize
from .registry import RegistryError, default_registry, load_registry
from .synthesize import synthesize
from .verdict import run_differential
from .weights import default_inputs

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BUGS = 2
EXIT_RESIDUAL = 3


def _registry(args):
    if getattr(args, "registry", None):
        return load_registry(args.registry, sigma=getattr(args, "sigma", 5))
    return default_registry(sigma=getattr(args, "sigma", 5))


def cmd_synthesize(args) -> int:
    registry = _registry(args)
    rng = np.random.default_rng(args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    worst = EXIT_OK
    for path in args.models:
        graph = deserialize(path, registry)
        synth, report = synthesize(graph, registry, rng,
                                   time_budget=args.budget or 300.0)
        stem = Path(path).stem
        serialize(synth, out_dir / f"{stem}.synth.json", registry.version)
        doc = {
            "original": report.original_stats,
            "synthesized": report.synthesized_stats,
            "residual": [list(map(str, gap)) + [why]
                         for gap, why in report.residual],
            "elapsed_seconds": round(report.elapsed, 3),
        }
        (out_dir / f"{stem}.synth.report.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n")
        print(f"{path}: {report.original_stats['nodes']} -> "
              f"{report.synthesized_stats['nodes']} nodes, "
              f"residual={len(report.residual)}, {report.elapsed:.2f}s")
        if report.residual:
            worst = EXIT_RESIDUAL
    return worst


def cmd_fuzz(args) -> int:
    if args.config:
        config = CampaignConfig.from_file(args.config)
    else:
        config = CampaignConfig()
    if args.seed is not None:
        config.rng_seed = args.seed
    if args.budget is not None:
        config.time_budget_seconds = args.budget
    if args.iterations is not None:
        config.max_iterations = args.iterations
    if args.backends:
        config.backends = args.backends.split(",")
    if args.fault:
        config.backends = ["eager", f"faulty:{args.fault}"]
    if args.out:
        config.out_dir = args.out
    if args.no_synthesis:
        config.synthesize_first = False
    if not config.out_dir:
        print("error: no output directory (--out or config out_dir)",
              file=sys.stderr)
        return EXIT_USAGE
    registry = _registry(args)
    for b in config.backends:  # fail fast on unknown backends
        make_backend(b, registry).close()
    result = run_campaign(config, registry)
    print(json.dumps(result.final_summary, indent=2, sort_keys=True))
    return EXIT_BUGS if result.bug_records else EXIT_OK


def cmd_replay(args) -> int:
    registry = _registry(args)
    graph = deserialize(args.model, registry)
    backends = [make_backend(b, registry) for b in
                (args.backends.split(",") if args.backends else ["eager", "fused"])]
    inputs = None
    sidecar = json.loads(Path(args.model).read_text()).get("sidecar")
    if sidecar:
        tensors = read_sidecar(Path(args.model).parent / sidecar)
        loaded = [tensors[k] for k in sorted(tensors) if k[0] == "input"]
        inputs = loaded or None
    verdict = run_differential(graph, inputs, backends, args.threshold)
    for b in backends:
        b.close()
    print(json.dumps({
        "verdict": verdict.kind,
        "d_mad": verdict.d_mad,
        "locus": list(verdict.locus),
        "statuses": verdict.details.get("statuses", {}),
    }, indent=2, sort_keys=True))
    return EXIT_BUGS if verdict.is_bug else EXIT_OK


def cmd_report(args) -> int:
    art = Path(args.artifacts)
    summary_path = art / "summary.json"
    cov_path = art / "coverage.csv"
    bugs_path = art / "bugs.json"
    if not summary_path.exists():
        print(f"error: {summary_path} not found", file=sys.stderr)
        return EXIT_USAGE
    summary = json.loads(summary_path.read_text())
    bugs = json.loads(bugs_path.read_text()) if bugs_path.exists() else []
    print(f"campaign artifacts: {art}")
    print(f"  iterations:       {summary.get('iterations', 0)}")
    print(f"  models generated: {summary.get('models_generated', 0)}")
    print(f"  invalid mutants:  {summary.get('invalid_mutants', 0)}")
    print(f"  cov_input mean:   {summary.get('cov_input_mean', 0):.4f}")
    print(f"  cov_param mean:   {summary.get('cov_param_mean', 0):.4f}")
    print(f"  cov_sequence:     {summary.get('cov_sequence', 0):.4f}")
    print(f"  behavior paths:   {summary.get('behavior_paths', 0)}")
    print(f"  unique bugs:      {len(bugs)}")
    for b in bugs:
        print(f"    [{b['verdict_kind']}] {b['dedup_key']} -> {b['model_path']}")
    if cov_path.exists():
        lines = cov_path.read_text().strip().splitlines()
        if lines and lines[0] != CSV_HEADER:
            print("warning: coverage.csv header mismatch", file=sys.stderr)
        last = lines[-1].split(",") if len(lines) > 1 else []
        if last:
            drift = (f"{summary['cov_input_mean']:.6f}" != last[2]
                     or f"{summary['cov_sequence']:.6f}" != last[4])
            if drift:
                print("warning: summary does not match final coverage row",
                      file=sys.stderr)
    return EXIT_OK


def cmd_list_faults(args) -> int:
    from .backends.faulty import FAULT_CATALOG

    for fid, desc in sorted(FAULT_CATALOG.items()):
        print(f"{fid}: {desc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tgfuzz",
        description="Coverage-guided differential fuzzer for tensor-graph runtimes")
    ap.add_argument("--registry", help="registry description JSON (default: built-in)")
    ap.add_argument("--sigma", type=int, default=5,
                    help="numeric-parameter coverage space size")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="shrink models while keeping their diversity")
    p.add_argument("models", nargs="+", help="model-exchange JSON files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=float, default=None,
                   help="per-model budget in seconds (default 300)")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("fuzz", help="run a fuzzing campaign")
    p.add_argument("--config", help="campaign config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--budget", type=float, default=None, help="seconds")
    p.add_argument("--iterations", type=int, default=None,
                   help="deterministic iteration budget")
    p.add_argument("--backends", help="comma-separated backend ids")
    p.add_argument("--fault", help="shortcut: eager vs faulty:<FAULT_ID>")
    p.add_argument("--out", help="artifacts directory")
    p.add_argument("--no-synthesis", action="store_true",
                   help="skip initial model synthesis")
    p.set_defaults(func=cmd_fuzz)

    p = sub.add_parser("replay", help="re-execute a stored model and print the verdict")
    p.add_argument("model", help="model-exchange JSON file")
    p.add_argument("--backends", help="comma-separated backend ids")
    p.add_argument("--threshold", type=float, default=0.4)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="summarize a campaign artifacts directory")
    p.add_argument("artifacts")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("list-faults", help="list the seeded-defect catalog")
    p.set_defaults(func=cmd_list_faults)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ModelFormatError, RegistryError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
