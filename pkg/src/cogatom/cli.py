"""Command-line entrypoint for the synthesis pipeline.

One subcommand per stage plus `run-all`; stage artifacts land in the work
directory. Exit codes: 0 success, 2 validation failure, 3 missing upstream
artifact, 4 client failure after retries.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import PipelineConfig, load_config
from .errors import ClientError, UpstreamMissingError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_UPSTREAM = 3
EXIT_CLIENT = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogatom",
        description="Graph-based synthesis of reasoning problems from cognitive atoms.",
    )
    parser.add_argument("--config", type=Path, default=None, help="TOML config file")
    parser.add_argument("--workdir", type=Path, default=None, help="artifact directory")
    parser.add_argument("--seed", type=int, default=None, help="global RNG seed")
    parser.add_argument("--dry-run", action="store_true", help="validate inputs, write nothing")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="curate seeds, embed and deduplicate atoms")
    p_ingest.add_argument("--seeds", type=Path, default=None, help="seeds.jsonl input")
    p_ingest.add_argument("--atoms", type=Path, default=None, help="atoms.jsonl input")
    p_ingest.add_argument("--min-avg", type=float, default=None, help="rubric average bar")

    p_graph = sub.add_parser("graph", help="build and prune the association graph")
    p_graph.add_argument("--seeds", type=Path, default=None, help="seeds.jsonl input")
    p_graph.add_argument("--atoms", type=Path, default=None, help="atom_table.jsonl artifact")

    p_walk = sub.add_parser("walk", help="sample degree-penalized reasoning paths")
    p_walk.add_argument("--graph", type=Path, default=None, help="graph.bin artifact")
    p_walk.add_argument("--alpha", type=float, default=None, help="degree penalty exponent")
    p_walk.add_argument("--length", type=int, default=None, help="walk length")
    p_walk.add_argument("--per-start", type=int, default=None, help="walks per start node")
    p_walk.add_argument("--start-limit", type=int, default=None, help="cap on start nodes")
    p_walk.add_argument("--workers", type=int, default=None, help="walker thread count")
    p_walk.add_argument("--no-degree-penalty", action="store_true", help="weight-proportional walk")

    p_dep = sub.add_parser("depgraph", help="judge pairwise dependencies per path")
    p_dep.add_argument("--mode", choices=("all_pairs", "adjacent"), default=None)

    p_refine = sub.add_parser("refine", help="grow combinations with the transfer operators")
    p_refine.add_argument("--target-k", type=int, default=None)
    p_refine.add_argument("--backbone-m", type=int, default=None)
    p_refine.add_argument("--theta", type=float, default=None)
    p_refine.add_argument("--no-cognitive", action="store_true", help="greedy padding only")

    p_synth = sub.add_parser("synth", help="generate, judge, and assemble the dataset")
    p_synth.add_argument("--tag", choices=("short_cot", "long_cot"), default=None)
    p_synth.add_argument("--no-reject-sampling", action="store_true", help="skip quality filters")

    p_metrics = sub.add_parser("metrics", help="diversity and difficulty report")
    p_metrics.add_argument("action", nargs="?", choices=("report",), default="report")
    p_metrics.add_argument("--dataset", type=Path, default=None, help="dataset.jsonl to analyze")
    p_metrics.add_argument("--out", type=Path, default=None, help="report.json destination")
    p_metrics.add_argument("--figures-dir", type=Path, default=None, help="figure output dir")

    p_all = sub.add_parser("run-all", help="run every stage in order")
    p_all.add_argument("--seeds", type=Path, default=None)
    p_all.add_argument("--atoms", type=Path, default=None)
    p_all.add_argument("--no-degree-penalty", action="store_true")
    p_all.add_argument("--no-cognitive", action="store_true")
    p_all.add_argument("--no-reject-sampling", action="store_true")
    return parser


def _apply_args(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if args.workdir is not None:
        cfg.workdir = args.workdir
    if args.seed is not None:
        cfg.rng_seed = args.seed
    if getattr(args, "seeds", None) is not None:
        cfg.seeds_path = args.seeds
    if getattr(args, "atoms", None) is not None:
        if args.command == "graph":
            cfg.artifact_paths[pipeline.ATOM_TABLE] = str(args.atoms)
        else:
            cfg.atoms_path = args.atoms
    if getattr(args, "min_avg", None) is not None:
        cfg.ingest.min_avg = args.min_avg
    if getattr(args, "graph", None) is not None:
        cfg.artifact_paths[pipeline.GRAPH_BIN] = str(args.graph)
    if getattr(args, "mode", None) is not None:
        cfg.depgraph.mode = args.mode
    if getattr(args, "tag", None) is not None:
        cfg.synth.generator_tag = args.tag

    walk_updates = {}
    for attr, field_name in (
        ("alpha", "alpha"),
        ("length", "walk_length"),
        ("per_start", "walks_per_start"),
        ("start_limit", "start_limit"),
        ("workers", "workers"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            walk_updates[field_name] = value
    if walk_updates:
        cfg.walk = dataclasses.replace(cfg.walk, **walk_updates)

    refine_updates = {}
    for attr, field_name in (
        ("target_k", "target_k"),
        ("backbone_m", "backbone_m"),
        ("theta", "theta"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            refine_updates[field_name] = value
    if refine_updates:
        cfg.refine = dataclasses.replace(cfg.refine, **refine_updates)

    if getattr(args, "no_degree_penalty", False):
        cfg.ablation.degree_penalty = False
    if getattr(args, "no_cognitive", False):
        cfg.ablation.cognitive_operators = False
    if getattr(args, "no_reject_sampling", False):
        cfg.ablation.reject_sampling = False
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        cfg = _apply_args(cfg, args)
        if args.command == "run-all":
            reports = pipeline.run_all(cfg, dry_run=args.dry_run)
            print(json.dumps({"stages": [r.get("stage") for r in reports]}, indent=2))
        elif args.command == "metrics" and (args.dataset is not None or args.out is not None):
            dataset = args.dataset if args.dataset is not None else cfg.resolve(pipeline.DATASET)
            out = args.out if args.out is not None else cfg.resolve(pipeline.REPORT)
            figures = args.figures_dir if args.figures_dir is not None else out.parent / "figures"
            report = pipeline.run_metrics_report(cfg, dataset, out, figures)
            print(json.dumps(report, indent=2, sort_keys=True))
        else:
            stage = "metrics" if args.command == "metrics" else args.command
            report = pipeline.run_stage(stage, cfg, dry_run=args.dry_run)
            print(json.dumps(report, indent=2, sort_keys=True))
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except UpstreamMissingError as exc:
        print(f"missing upstream: {exc}", file=sys.stderr)
        return EXIT_UPSTREAM
    except ClientError as exc:
        print(f"client failure: {exc}", file=sys.stderr)
        return EXIT_CLIENT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
