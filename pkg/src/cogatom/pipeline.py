"""Stage execution: artifact plumbing tying the library modules together.

Seven stages run in order, each reading the previous stage's JSONL/binary
artifacts and writing its own with a provenance header (config hash plus
input file hashes). Reruns with identical inputs and seed produce identical
bytes; artifacts whose upstream files changed on disk are refused.
"""

from __future__ import annotations

import csv
import logging
import time
from importlib import resources
from pathlib import Path
from typing import Iterable

from . import artifacts as art
from .atoms import RawAtom, SeedProblem, dedup_atoms, filter_seeds, judge_seeds
from .clients import (
    ClientRequest,
    HashChatClient,
    HashEmbedder,
    ReplayChatClient,
    TranscriptRecorder,
)
from .cograph import (
    build_graph,
    export_edges_jsonl_rows,
    load_graph_binary,
    prune_supernodes,
    save_graph_binary,
)
from .config import PipelineConfig
from .depgraph import StrengthRecord, build_dependency_graph, elicit_strengths
from .errors import UpstreamMissingError, ValidationError
from .metrics import DifficultyRecord, answer_consistency, cluster_problems, ptd, ptd_raw
from .refine import OperatorEvent, ReasoningCombination, refine_combination
from .synth import (
    QualityBars,
    SynthClients,
    SynthConfig,
    assemble_dataset,
    extract_answer,
    synthesize_dataset,
)
from .walker import ReasoningPath, run_walks

log = logging.getLogger(__name__)

STAGES = ("ingest", "graph", "walk", "depgraph", "refine", "synth", "metrics")

ATOM_TABLE = "atom_table.jsonl"
GRAPH_BIN = "graph.bin"
GRAPH_JSONL = "graph.jsonl"
PRUNE_REPORT = "prune_report.json"
PATHS = "paths.jsonl"
DEP_GRAPHS = "dep_graphs.jsonl"
DEP_TRANSCRIPTS = "dep_transcripts.jsonl"
COMBINATIONS = "combinations.jsonl"
DATASET = "dataset.jsonl"
MANIFEST = "manifest.json"
SYNTH_TRANSCRIPTS = "synth_transcripts.jsonl"
METRICS_TRANSCRIPTS = "metrics_transcripts.jsonl"
REPORT = "report.json"
DIFFICULTY_CSV = "difficulty_records.csv"

# stage -> list of (artifact file, producing stage); raw inputs handled separately
_STAGE_PREREQS: dict[str, list[tuple[str, str]]] = {
    "ingest": [],
    "graph": [(ATOM_TABLE, "ingest")],
    "walk": [(GRAPH_BIN, "graph")],
    "depgraph": [(PATHS, "walk"), (ATOM_TABLE, "ingest")],
    "refine": [(PATHS, "walk"), (DEP_GRAPHS, "depgraph")],
    "synth": [(COMBINATIONS, "refine"), (ATOM_TABLE, "ingest")],
    "metrics": [(DATASET, "synth")],
}


def load_template(name: str, template_dir: Path | None = None) -> str:
    if template_dir is not None:
        path = Path(template_dir) / f"{name}.txt"
        if path.exists():
            return path.read_text(encoding="utf-8")
    return (resources.files("cogatom") / "templates" / f"{name}.txt").read_text(encoding="utf-8")


def _check_prereqs(stage: str, cfg: PipelineConfig) -> None:
    for filename, producer in _STAGE_PREREQS[stage]:
        path = cfg.resolve(filename)
        if not path.exists():
            raise UpstreamMissingError(
                f"stage '{stage}' needs {filename}; run the '{producer}' stage first"
            )
        art.verify_chain(path)


def _make_chat_client(cfg: PipelineConfig, role: str, salt: str, replay_file: str):
    if cfg.clients.kind == "mock":
        return HashChatClient(salt=salt)
    if cfg.clients.kind == "replay":
        return ReplayChatClient(cfg.resolve(replay_file))
    raise ValidationError(
        f"client kind '{cfg.clients.kind}' has no built-in transport; "
        f"use 'mock' or 'replay' (endpoint descriptor for role '{role}' is deployment config)"
    )


def _embedder(cfg: PipelineConfig) -> HashEmbedder:
    return HashEmbedder(dim=cfg.clients.embedder_dim)


def _write_stage_report(stage: str, cfg: PipelineConfig, counts: dict, started: float) -> dict:
    report = {
        "stage": stage,
        "counts": counts,
        "duration_s": round(time.monotonic() - started, 6),
        "config_hash": art.config_hash(cfg.hash_dict()),
    }
    art.write_json(cfg.workdir / "reports" / f"{stage}_report.json", report)
    return report


def _read_rows(path: Path) -> Iterable[tuple[int, dict]]:
    for lineno, row in enumerate(art.read_jsonl(path, skip_header=False), start=1):
        if isinstance(row, dict) and art.HEADER_KEY in row:
            continue
        yield lineno, row


# ---------------------------------------------------------------------------
# Stages


def stage_ingest(cfg: PipelineConfig, dry_run: bool = False) -> dict:
    started = time.monotonic()
    seeds_file, atoms_file = cfg.seeds_file, cfg.atoms_file
    for label, path in (("seeds", seeds_file), ("atoms", atoms_file)):
        if not path.exists():
            raise UpstreamMissingError(f"{label} input missing: {path}")
    if dry_run:
        return {"stage": "ingest", "dry_run": True}

    seeds: list[SeedProblem] = []
    for lineno, row in _read_rows(seeds_file):
        try:
            seed = SeedProblem.from_dict(row)
            seed.validate()
        except ValidationError as exc:
            raise ValidationError(f"{seeds_file}:{lineno}: {exc}") from exc
        seeds.append(seed)
    seed_ids = {s.id for s in seeds}
    if len(seed_ids) != len(seeds):
        raise ValidationError(f"{seeds_file}: duplicate seed ids")

    unscored = [s for s in seeds if not s.rubric_scores]
    if unscored and cfg.ingest.judge_unscored_seeds:
        judge = _make_chat_client(cfg, "judge", "judge", SYNTH_TRANSCRIPTS)
        template = load_template("seed_rubric", cfg.template_dir)
        judged = {s.id: s for s in judge_seeds(unscored, judge, template, cfg.ingest.rubric_rounds)}
        seeds = [judged.get(s.id, s) for s in seeds]

    kept = filter_seeds(seeds, cfg.ingest.min_avg)
    kept_ids = {s.id for s in kept}

    raw_rows: list[dict] = []
    dropped_filtered = 0
    for lineno, row in _read_rows(atoms_file):
        source = row.get("source_problem")
        if source not in seed_ids:
            raise ValidationError(
                f"{atoms_file}:{lineno}: atom references unknown seed problem '{source}'"
            )
        if source not in kept_ids:
            dropped_filtered += 1
            continue
        if "text" not in row:
            raise ValidationError(f"{atoms_file}:{lineno}: atom row missing 'text'")
        raw_rows.append(row)

    embedder = _embedder(cfg)
    missing = [i for i, row in enumerate(raw_rows) if "embedding" not in row]
    if missing:
        vectors = embedder.embed([raw_rows[i]["text"] for i in missing])
        for i, vec in zip(missing, vectors):
            raw_rows[i]["embedding"] = vec

    raws = [RawAtom.make(r["text"], r["source_problem"], r["embedding"]) for r in raw_rows]
    table = dedup_atoms(raws, cfg.ingest.cos_threshold, cfg.ingest.cluster_budget, cfg.rng_seed)

    header = art.make_header(
        "ingest", art.config_hash(cfg.hash_dict()), {"seeds": seeds_file, "atoms": atoms_file}
    )
    rows = [
        {
            "atom_id": a.atom_id,
            "canonical_text": a.canonical_text,
            "member_count": a.member_count,
            "members": [
                {"index": i, "source_problem": raws[i].source_problem} for i in a.members
            ],
        }
        for a in table
    ]
    art.write_jsonl(cfg.resolve(ATOM_TABLE), rows, header)
    counts = {
        "seeds_total": len(seeds),
        "seeds_kept": len(kept),
        "atoms_total": len(raw_rows) + dropped_filtered,
        "atoms_dropped_filtered_seed": dropped_filtered,
        "atoms_clustered": len(raws),
        "atom_table_size": len(table),
    }
    return _write_stage_report("ingest", cfg, counts, started)


def _load_atom_table(cfg: PipelineConfig) -> tuple[dict[int, str], dict[str, set[int]]]:
    """Returns (atom_id -> canonical text, problem_id -> atom ids)."""
    texts: dict[int, str] = {}
    problem_atoms: dict[str, set[int]] = {}
    for _, row in _read_rows(cfg.resolve(ATOM_TABLE)):
        atom_id = int(row["atom_id"])
        texts[atom_id] = row["canonical_text"]
        for member in row["members"]:
            problem_atoms.setdefault(member["source_problem"], set()).add(atom_id)
    return texts, problem_atoms


def stage_graph(cfg: PipelineConfig, dry_run: bool = False) -> dict:
    started = time.monotonic()
    _check_prereqs("graph", cfg)
    if dry_run:
        return {"stage": "graph", "dry_run": True}

    texts, problem_atoms = _load_atom_table(cfg)
    g = build_graph(problem_atoms, texts.keys())
    pruned, prune_report = prune_supernodes(g)

    cfg_hash = art.config_hash(cfg.hash_dict())
    header = art.make_header("graph", cfg_hash, {"atom_table": cfg.resolve(ATOM_TABLE)})
    save_graph_binary(pruned, cfg.resolve(GRAPH_BIN), header)
    art.write_jsonl(cfg.resolve(GRAPH_JSONL), export_edges_jsonl_rows(pruned), header)
    art.write_json(cfg.resolve(PRUNE_REPORT), prune_report.to_dict(), header)

    counts = {
        "nodes_before": len(g),
        "edges_before": len(g.edges),
        "removed_supernodes": len(prune_report.removed),
        "nodes_after": len(pruned),
        "edges_after": len(pruned.edges),
        "mu": prune_report.mu,
        "sigma": prune_report.sigma,
        "threshold": prune_report.threshold,
    }
    return _write_stage_report("graph", cfg, counts, started)


def stage_walk(cfg: PipelineConfig, dry_run: bool = False) -> dict:
    started = time.monotonic()
    _check_prereqs("walk", cfg)
    if dry_run:
        return {"stage": "walk", "dry_run": True}

    g, _ = load_graph_binary(cfg.resolve(GRAPH_BIN))
    walk_cfg = cfg.effective_walk()
    paths = run_walks(g, walk_cfg)

    header = art.make_header(
        "walk", art.config_hash(cfg.hash_dict()), {"graph": cfg.resolve(GRAPH_BIN)}
    )
    art.write_jsonl(cfg.resolve(PATHS), (p.to_dict() for p in paths), header)
    counts = {
        "starts": len({p.start for p in paths}),
        "paths": len(paths),
        "complete": sum(1 for p in paths if p.complete),
        "truncated": sum(1 for p in paths if not p.complete),
    }
    return _write_stage_report("walk", cfg, counts, started)


def _load_paths(cfg: PipelineConfig) -> list[ReasoningPath]:
    return [ReasoningPath.from_dict(row) for _, row in _read_rows(cfg.resolve(PATHS))]


def stage_depgraph(cfg: PipelineConfig, dry_run: bool = False) -> dict:
    started = time.monotonic()
    _check_prereqs("depgraph", cfg)
    if dry_run:
        return {"stage": "depgraph", "dry_run": True}

    texts, _ = _load_atom_table(cfg)
    paths = _load_paths(cfg)
    judge = _make_chat_client(cfg, "judge", "judge", DEP_TRANSCRIPTS)
    template = load_template("dependency_strength", cfg.template_dir)

    cache: dict[tuple[int, int], StrengthRecord] = {}
    transcript: list[dict] = []
    rows = []
    judged_pairs = 0
    kept_edges = 0
    for path in paths:
        records = elicit_strengths(
            path.nodes,
            texts,
            judge,
            template,
            mode=cfg.depgraph.mode,
            max_retries=cfg.depgraph.max_retries,
            cache=cache,
            transcript=transcript,
        )
        judged_pairs += len(records)
        dep = build_dependency_graph(path, records, threshold=cfg.depgraph.threshold)
        kept_edges += len(dep.edges)
        rows.append(
            {
                "path_id": path.path_id,
                "nodes": list(path.nodes),
                "edges": [
                    {"from": u, "to": v, "strength": s} for (u, v), s in sorted(dep.edges.items())
                ],
            }
        )

    cfg_hash = art.config_hash(cfg.hash_dict())
    header = art.make_header(
        "depgraph",
        cfg_hash,
        {"paths": cfg.resolve(PATHS), "atom_table": cfg.resolve(ATOM_TABLE)},
    )
    art.write_jsonl(cfg.resolve(DEP_GRAPHS), rows, header)
    art.write_jsonl(cfg.resolve(DEP_TRANSCRIPTS), transcript, header)
    counts = {
        "paths": len(paths),
        "judged_pairs": judged_pairs,
        "unique_pairs": len(cache),
        "kept_edges": kept_edges,
    }
    return _write_stage_report("depgraph", cfg, counts, started)


def stage_refine(cfg: PipelineConfig, dry_run: bool = False) -> dict:
    started = time.monotonic()
    _check_prereqs("refine", cfg)
    if dry_run:
        return {"stage": "refine", "dry_run": True}

    paths = {p.path_id: p for p in _load_paths(cfg)}
    refine_cfg = cfg.effective_refine()
    rows = []
    complete = 0
    for lineno, dep_row in _read_rows(cfg.resolve(DEP_GRAPHS)):
        path = paths.get(dep_row["path_id"])
        if path is None:
            raise ValidationError(
                f"{DEP_GRAPHS}:{lineno}: unknown path_id '{dep_row['path_id']}'"
            )
        records = [
            StrengthRecord(e["from"], e["to"], e["strength"], judge_provenance="stored")
            for e in dep_row["edges"]
        ]
        dep = build_dependency_graph(path, records, threshold=cfg.depgraph.threshold)
        combo = refine_combination(path, dep, refine_cfg, combo_id=f"c-{path.path_id}")
        complete += 0 if combo.incomplete else 1
        rows.append(combo.to_dict())

    header = art.make_header(
        "refine",
        art.config_hash(cfg.hash_dict()),
        {"paths": cfg.resolve(PATHS), "dep_graphs": cfg.resolve(DEP_GRAPHS)},
    )
    art.write_jsonl(cfg.resolve(COMBINATIONS), rows, header)
    counts = {"combinations": len(rows), "complete": complete, "incomplete": len(rows) - complete}
    return _write_stage_report("refine", cfg, counts, started)


def _load_combinations(cfg: PipelineConfig) -> list[ReasoningCombination]:
    combos = []
    for _, row in _read_rows(cfg.resolve(COMBINATIONS)):
        combos.append(
            ReasoningCombination(
                combo_id=row["combo_id"],
                atoms=tuple(row["atoms"]),
                source_path=row["source_path"],
                target_k=row["target_k"],
                operator_trace=tuple(
                    OperatorEvent(
                        op=e["op"], added=tuple(e["added"]), anchor=tuple(e["anchor"]), score=e["score"]
                    )
                    for e in row["operator_trace"]
                ),
                incomplete=row["incomplete"],
            )
        )
    return combos


def stage_synth(cfg: PipelineConfig, dry_run: bool = False) -> dict:
    started = time.monotonic()
    _check_prereqs("synth", cfg)
    if dry_run:
        return {"stage": "synth", "dry_run": True}

    texts, _ = _load_atom_table(cfg)
    combos = _load_combinations(cfg)
    clients = SynthClients(
        generator=_make_chat_client(cfg, "generator", cfg.synth.generator_tag, SYNTH_TRANSCRIPTS),
        judge=_make_chat_client(cfg, "judge", "judge", SYNTH_TRANSCRIPTS),
        teacher=_make_chat_client(cfg, "teacher", "teacher", SYNTH_TRANSCRIPTS),
    )
    templates = {
        name: load_template(name, cfg.template_dir)
        for name in ("problem_generation", "problem_quality", "solution_generation", "solution_quality")
    }
    synth_cfg = SynthConfig(
        generator_tag=cfg.synth.generator_tag,
        bars=QualityBars(cfg.synth.problem_bar, cfg.synth.solution_bar),
        max_retries=cfg.synth.max_retries,
        max_inflight=cfg.synth.max_inflight,
        reject_sampling=cfg.ablation.reject_sampling,
    )
    outcomes, transcript = synthesize_dataset(combos, texts, clients, templates, synth_cfg)
    rows, manifest = assemble_dataset(outcomes)
    manifest["filter_enabled"] = synth_cfg.reject_sampling

    header = art.make_header(
        "synth",
        art.config_hash(cfg.hash_dict()),
        {"combinations": cfg.resolve(COMBINATIONS), "atom_table": cfg.resolve(ATOM_TABLE)},
    )
    art.write_jsonl(cfg.resolve(DATASET), rows, header)
    art.write_json(cfg.resolve(MANIFEST), manifest, header)
    art.write_jsonl(cfg.resolve(SYNTH_TRANSCRIPTS), transcript, header)
    counts = dict(manifest)
    return _write_stage_report("synth", cfg, counts, started)


def stage_metrics(cfg: PipelineConfig, dry_run: bool = False) -> dict:
    started = time.monotonic()
    _check_prereqs("metrics", cfg)
    if dry_run:
        return {"stage": "metrics", "dry_run": True}
    return run_metrics_report(
        cfg,
        dataset_path=cfg.resolve(DATASET),
        out_path=cfg.resolve(REPORT),
        figures_dir=cfg.workdir / "figures",
        started=started,
    )


def run_metrics_report(
    cfg: PipelineConfig,
    dataset_path: Path,
    out_path: Path,
    figures_dir: Path,
    started: float | None = None,
) -> dict:
    """Compute the diversity/difficulty report for a dataset file.

    Writes the JSON report, a per-problem CSV, and the figures next to it.
    Exposed separately so `metrics report` can target any dataset artifact.
    """
    from . import plots  # deferred: keeps matplotlib out of non-report stages

    started = time.monotonic() if started is None else started
    if not dataset_path.exists():
        raise UpstreamMissingError(f"dataset missing: {dataset_path}; run the 'synth' stage first")
    art.verify_chain(dataset_path)

    dataset = [row for _, row in _read_rows(dataset_path)]
    if not dataset:
        raise ValidationError(f"{dataset_path}: dataset is empty; nothing to report on")

    stats = cluster_problems(
        [row["question"] for row in dataset],
        _embedder(cfg),
        cos_threshold=cfg.metrics.cos_threshold,
        cluster_budget=cfg.metrics.cluster_budget,
        rng_seed=cfg.rng_seed,
    )
    diversity = ptd(stats)
    clamped = ptd_raw(stats) < 0.0

    tags = tuple(cfg.metrics.solver_tags)
    solver_template = load_template("solution_generation", cfg.template_dir)
    if cfg.clients.kind == "replay":
        # Both tags ask the same prompt; a shared client replays the recorded
        # per-hash response order (first tag's answer first, then the second's).
        shared = _make_chat_client(cfg, "solver", "", METRICS_TRANSCRIPTS)
        solvers = {tag: TranscriptRecorder(shared) for tag in tags}
    else:
        solvers = {
            tag: TranscriptRecorder(_make_chat_client(cfg, tag, tag, METRICS_TRANSCRIPTS))
            for tag in tags
        }
    records = []
    for row in dataset:
        answers: dict[str, str] = {}
        tokens: dict[str, int] = {}
        for tag in tags:
            prompt = solver_template.format(question=row["question"])
            response = solvers[tag].complete(
                ClientRequest(template_id="solver", rendered_prompt=prompt)
            )
            answer = extract_answer(response.text)
            if answer is not None:
                answers[tag] = answer
                tokens[tag] = response.token_count
        records.append(DifficultyRecord.make(row["problem_id"], answers, tokens))
    transcript = [rec for tag in tags for rec in solvers[tag].records]

    result = answer_consistency(records, (tags[0], tags[1]))
    cfg_hash = art.config_hash(cfg.hash_dict())
    header = art.make_header("metrics", cfg_hash, {"dataset": dataset_path})
    report = {
        "ptd": diversity,
        "ptd_clamped": clamped,
        "n_total": stats.n_total,
        "n_clusters": stats.n_clusters,
        "consistency_rate": result.rate,
        "mean_tokens": result.mean_tokens,
        "skipped": result.skipped,
        "n_used": result.n_used,
    }
    art.write_json(out_path, report, header)
    art.write_jsonl(out_path.parent / METRICS_TRANSCRIPTS, transcript, header)

    csv_path = out_path.parent / DIFFICULTY_CSV
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["problem_id", f"answer_{tags[0]}", f"answer_{tags[1]}", f"tokens_{tags[0]}", f"tokens_{tags[1]}", "consistent"]
        )
        for rec in records:
            writer.writerow(
                [
                    rec.problem_id,
                    rec.answers.get(tags[0], ""),
                    rec.answers.get(tags[1], ""),
                    rec.tokens.get(tags[0], ""),
                    rec.tokens.get(tags[1], ""),
                    int(rec.consistent and all(t in rec.answers for t in tags)),
                ]
            )

    token_sums = [
        rec.tokens[tags[0]] + rec.tokens[tags[1]]
        for rec in records
        if all(t in rec.tokens for t in tags)
    ]
    plots.save_cluster_size_figure(stats.sizes, figures_dir / "cluster_sizes.png")
    plots.save_token_figure(token_sums, figures_dir / "inference_tokens.png")

    counts = dict(report)
    return _write_stage_report("metrics", cfg, counts, started)


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "graph": stage_graph,
    "walk": stage_walk,
    "depgraph": stage_depgraph,
    "refine": stage_refine,
    "synth": stage_synth,
    "metrics": stage_metrics,
}


def run_stage(stage: str, cfg: PipelineConfig, dry_run: bool = False) -> dict:
    if stage not in _STAGE_FUNCS:
        raise ValidationError(f"unknown stage '{stage}'; expected one of {', '.join(STAGES)}")
    log.info("running stage '%s' in %s", stage, cfg.workdir)
    return _STAGE_FUNCS[stage](cfg, dry_run=dry_run)


def run_all(cfg: PipelineConfig, dry_run: bool = False) -> list[dict]:
    reports = []
    for stage in STAGES:
        reports.append(run_stage(stage, cfg, dry_run=dry_run))
        if dry_run and stage == "ingest":
            # Later stages depend on artifacts a dry run never writes.
            break
    return reports
