"""Global co-occurrence graph over cognitive atoms.

Atoms extracted from the same problem co-occur; each unordered pair gets an
edge whose weight is the log-damped co-occurrence count log(1 + n). Nodes
whose degree exceeds mean + 2*stddev of the degree distribution are treated
as overly generic and pruned, yielding the graph the walker explores.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .artifacts import GRAPH_MAGIC as _MAGIC
from .artifacts import canonical_dumps, read_json
from .errors import ValidationError


@dataclass
class EdgeStat:
    n: int
    weight: float

    @classmethod
    def from_count(cls, n: int) -> "EdgeStat":
        return cls(n=n, weight=math.log1p(n))


class AssociationGraph:
    """Undirected weighted graph; edges keyed (min_id, max_id), no self-loops."""

    def __init__(self) -> None:
        self.nodes: set[int] = set()
        self.edges: dict[tuple[int, int], EdgeStat] = {}
        self._adj: dict[int, dict[int, EdgeStat]] = {}

    def add_node(self, v: int) -> None:
        self.nodes.add(v)
        self._adj.setdefault(v, {})

    def add_cooccurrence(self, u: int, v: int, count: int = 1) -> None:
        if u == v:
            raise ValidationError(f"self-loop on atom {u}")
        key = (u, v) if u < v else (v, u)
        stat = self.edges.get(key)
        if stat is None:
            stat = EdgeStat.from_count(count)
            self.edges[key] = stat
            self.add_node(u)
            self.add_node(v)
            self._adj[u][v] = stat
            self._adj[v][u] = stat
        else:
            stat.n += count
            stat.weight = math.log1p(stat.n)

    def neighbors(self, v: int) -> dict[int, EdgeStat]:
        return self._adj.get(v, {})

    def degree(self, v: int) -> int:
        return len(self._adj.get(v, ()))

    @property
    def degree_index(self) -> dict[int, int]:
        return {v: self.degree(v) for v in self.nodes}

    def edge(self, u: int, v: int) -> EdgeStat | None:
        return self.edges.get((u, v) if u < v else (v, u))

    def sorted_edges(self) -> list[tuple[int, int, EdgeStat]]:
        return [(u, v, self.edges[(u, v)]) for u, v in sorted(self.edges)]

    def __len__(self) -> int:
        return len(self.nodes)


def build_graph(
    problem_atoms: Mapping[str, Iterable[int]],
    known_atoms: Iterable[int],
) -> AssociationGraph:
    """Count within-problem co-occurrence over all unordered atom pairs.

    Every atom of the finalized table becomes a node (isolated atoms keep
    degree 0); repeated pairs within one problem count once since atom sets
    are deduplicated per problem.
    """
    g = AssociationGraph()
    known = set(known_atoms)
    for v in known:
        g.add_node(v)
    for pid in sorted(problem_atoms):
        atom_set = sorted(set(problem_atoms[pid]))
        for a in atom_set:
            if a not in known:
                raise ValidationError(f"problem '{pid}': unknown atom_id {a}")
        for i, u in enumerate(atom_set):
            for v in atom_set[i + 1 :]:
                g.add_cooccurrence(u, v)
    return g


@dataclass(frozen=True)
class DegreeStats:
    mu: float
    sigma: float
    threshold: float


@dataclass(frozen=True)
class PruneReport:
    mu: float
    sigma: float
    threshold: float
    removed: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "sigma": self.sigma,
            "threshold": self.threshold,
            "removed": list(self.removed),
        }


def degree_stats(degrees: Iterable[int], sigma_multiplier: float = 2.0) -> DegreeStats:
    """Mean, population standard deviation, and prune threshold of a degree list."""
    arr = np.asarray(list(degrees), dtype=np.float64)
    if arr.size == 0:
        raise ValidationError("degree statistics of an empty graph are undefined")
    mu = float(arr.mean())
    sigma = float(arr.std())  # population std: the graph is the whole population
    return DegreeStats(mu=mu, sigma=sigma, threshold=mu + sigma_multiplier * sigma)


def select_supernodes(
    degree_index: Mapping[int, int],
    stats: DegreeStats,
    strict: bool = True,
) -> list[int]:
    """Nodes whose degree exceeds the threshold; strict '>' by default."""
    if strict:
        return sorted(v for v, d in degree_index.items() if d > stats.threshold)
    return sorted(v for v, d in degree_index.items() if d >= stats.threshold)


def prune_supernodes(
    g: AssociationGraph,
    sigma_multiplier: float = 2.0,
    strict: bool = True,
) -> tuple[AssociationGraph, PruneReport]:
    """Remove statistical supernodes and their incident edges (single pass).

    Statistics are computed once on the input graph; re-pruning the result
    recomputes them and may remove more nodes, so one pass is the contract.
    """
    if len(g) == 0:
        raise ValidationError("cannot prune an empty graph")
    degree_index = g.degree_index
    stats = degree_stats(degree_index.values(), sigma_multiplier)
    removed = select_supernodes(degree_index, stats, strict)
    removed_set = set(removed)

    pruned = AssociationGraph()
    for v in g.nodes:
        if v not in removed_set:
            pruned.add_node(v)
    for (u, v), stat in g.edges.items():
        if u not in removed_set and v not in removed_set:
            pruned.add_cooccurrence(u, v, count=stat.n)
    report = PruneReport(
        mu=stats.mu, sigma=stats.sigma, threshold=stats.threshold, removed=tuple(removed)
    )
    return pruned, report


# ---------------------------------------------------------------------------
# Persistence


def save_graph_binary(g: AssociationGraph, path: str | Path, header: dict | None = None) -> None:
    """Compact deterministic binary: magic, JSON header line, node and edge arrays."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nodes = sorted(g.nodes)
    edges = g.sorted_edges()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write((canonical_dumps(header or {}) + "\n").encode("utf-8"))
        fh.write(struct.pack("<QQ", len(nodes), len(edges)))
        fh.write(np.asarray(nodes, dtype="<u8").tobytes())
        for u, v, stat in edges:
            fh.write(struct.pack("<QQQ", u, v, stat.n))


def load_graph_binary(path: str | Path) -> tuple[AssociationGraph, dict]:
    import json

    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValidationError(f"{path}: not a graph binary (bad magic)")
        header = json.loads(fh.readline().decode("utf-8"))
        n_nodes, n_edges = struct.unpack("<QQ", fh.read(16))
        nodes = np.frombuffer(fh.read(8 * n_nodes), dtype="<u8")
        g = AssociationGraph()
        for v in nodes:
            g.add_node(int(v))
        for _ in range(n_edges):
            u, v, n = struct.unpack("<QQQ", fh.read(24))
            g.add_cooccurrence(int(u), int(v), count=int(n))
    return g, header


def export_edges_jsonl_rows(g: AssociationGraph) -> list[dict]:
    return [
        {"u": u, "v": v, "n": stat.n, "weight": stat.weight} for u, v, stat in g.sorted_edges()
    ]


def load_prune_report(path: str | Path) -> PruneReport:
    obj = read_json(path)
    return PruneReport(
        mu=obj["mu"], sigma=obj["sigma"], threshold=obj["threshold"], removed=tuple(obj["removed"])
    )
