"""Degree-regularized biased random walks over the pruned association graph.

At each step the next node is drawn from the current node's unvisited
neighbors with probability proportional to

    weight(curr, next) / (degree(next) + epsilon) ** alpha

so strongly associated but uncommon neighbors are favored. With the degree
penalty disabled the walk degenerates to plain weight-proportional sampling
(the ablation baseline). Walks are deterministic: each (start, walk index)
pair derives its own RNG stream from the master seed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .artifacts import stable_u64
from .cograph import AssociationGraph
from .errors import ValidationError


@dataclass(frozen=True)
class WalkConfig:
    alpha: float = 1.0
    epsilon: float = 1e-9
    walk_length: int = 5
    walks_per_start: int = 1
    rng_seed: int = 0
    allow_backtrack: bool = False
    degree_penalty_enabled: bool = True
    start_limit: int | None = None  # cap on start nodes (smoke runs); None = every node
    workers: int = 1

    def validate(self) -> None:
        if self.epsilon <= 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        if self.walk_length < 2:
            raise ValidationError(f"walk_length must be >= 2, got {self.walk_length}")
        if self.alpha < 0:
            raise ValidationError(f"alpha must be >= 0, got {self.alpha}")
        if self.walks_per_start < 1:
            raise ValidationError(f"walks_per_start must be >= 1, got {self.walks_per_start}")


@dataclass(frozen=True)
class ReasoningPath:
    path_id: str
    nodes: tuple[int, ...]
    start: int
    trace_seed: int
    complete: bool = True

    def to_dict(self) -> dict:
        return {
            "path_id": self.path_id,
            "nodes": list(self.nodes),
            "start": self.start,
            "trace_seed": self.trace_seed,
            "complete": self.complete,
        }

    @classmethod
    def from_dict(cls, row: dict) -> "ReasoningPath":
        return cls(
            path_id=row["path_id"],
            nodes=tuple(row["nodes"]),
            start=row["start"],
            trace_seed=row["trace_seed"],
            complete=row.get("complete", True),
        )


def step_distribution(
    g: AssociationGraph,
    v_curr: int,
    visited: set[int],
    cfg: WalkConfig,
    prev: int | None = None,
) -> dict[int, float]:
    """Transition probabilities over admissible neighbors of `v_curr`.

    Visited nodes are always excluded; the immediately previous node is
    excluded additionally when backtracking is off (relevant only when the
    caller's visited set does not already contain it). Returns an empty map
    when no neighbor is admissible, which terminates the walk.
    """
    scores: dict[int, float] = {}
    for u in sorted(g.neighbors(v_curr)):
        if u in visited:
            continue
        if prev is not None and not cfg.allow_backtrack and u == prev:
            continue
        weight = g.neighbors(v_curr)[u].weight
        if cfg.degree_penalty_enabled:
            score = weight / (g.degree(u) + cfg.epsilon) ** cfg.alpha
        else:
            score = weight
        if score > 0.0:
            scores[u] = score
    total = sum(scores.values())
    if total <= 0.0:
        return {}
    return {u: s / total for u, s in scores.items()}


def sample_step(distribution: dict[int, float], rng: np.random.Generator) -> int:
    """Inverse-CDF draw over the distribution's canonically ordered support."""
    r = rng.random()
    acc = 0.0
    last = None
    for u in sorted(distribution):
        acc += distribution[u]
        last = u
        if r < acc:
            return u
    return last  # guard against accumulated rounding at r ~ 1.0


def derive_walk_seed(rng_seed: int, start: int, walk_index: int) -> int:
    return stable_u64("walk", rng_seed, start, walk_index)


def run_walk(g: AssociationGraph, start: int, walk_index: int, cfg: WalkConfig) -> ReasoningPath:
    if start not in g.nodes:
        raise ValidationError(f"start node {start} not in graph")
    trace_seed = derive_walk_seed(cfg.rng_seed, start, walk_index)
    rng = np.random.Generator(np.random.PCG64(trace_seed))
    nodes = [start]
    visited = {start}
    prev: int | None = None
    while len(nodes) < cfg.walk_length:
        dist = step_distribution(g, nodes[-1], visited, cfg, prev=prev)
        if not dist:
            break
        nxt = sample_step(dist, rng)
        prev = nodes[-1]
        nodes.append(nxt)
        visited.add(nxt)
    start_label = f"{start:08d}" if isinstance(start, int) else str(start)
    return ReasoningPath(
        path_id=f"{start_label}-{walk_index:04d}",
        nodes=tuple(nodes),
        start=start,
        trace_seed=trace_seed,
        complete=len(nodes) == cfg.walk_length,
    )


def run_walks(g: AssociationGraph, cfg: WalkConfig) -> list[ReasoningPath]:
    """Launch `walks_per_start` walks from every node (or the configured cap).

    Walks are independent, so they may execute on a bounded thread pool; the
    result order is canonical (start id, then walk index) either way.
    Isolated start nodes yield length-1 paths, emitted with complete=False.
    """
    cfg.validate()
    starts = sorted(g.nodes)
    if cfg.start_limit is not None:
        starts = starts[: cfg.start_limit]

    def walks_for(start: int) -> list[ReasoningPath]:
        return [run_walk(g, start, i, cfg) for i in range(cfg.walks_per_start)]

    if cfg.workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            per_start = list(pool.map(walks_for, starts))
    else:
        per_start = [walks_for(s) for s in starts]
    return [p for batch in per_start for p in batch]
