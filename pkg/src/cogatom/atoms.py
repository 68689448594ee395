"""Seed-problem curation and reasoning-atom deduplication.

Seed problems arrive with (or receive, via a pluggable judge) three rubric
scores on a 1-5 scale and are kept when their average clears a bar. Raw
atoms -- one natural-language reasoning unit each, with a unit-norm
embedding -- are clustered with mini-batch k-means and a greedy centroid
merge at a cosine threshold, producing the deduplicated atom table whose
dense ids every downstream stage references.
"""

from __future__ import annotations

import heapq
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .clients import ChatClient, ClientRequest, call_and_parse, parse_strength
from .errors import ValidationError

log = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-6


@dataclass
class SeedProblem:
    id: str
    source: str
    statement: str
    solution: str | None = None
    rubric_scores: tuple[int, ...] = ()
    avg_score: float | None = None

    def validate(self) -> None:
        for s in self.rubric_scores:
            if not 1 <= s <= 5:
                raise ValidationError(f"seed '{self.id}': rubric score {s} outside [1,5]")
        if self.rubric_scores and self.avg_score is not None:
            mean = sum(self.rubric_scores) / len(self.rubric_scores)
            if abs(mean - self.avg_score) > 1e-9:
                raise ValidationError(
                    f"seed '{self.id}': avg_score {self.avg_score} != mean of scores {mean}"
                )

    @property
    def mean_score(self) -> float | None:
        if self.avg_score is not None:
            return self.avg_score
        if self.rubric_scores:
            return sum(self.rubric_scores) / len(self.rubric_scores)
        return None

    @classmethod
    def from_dict(cls, row: dict) -> "SeedProblem":
        try:
            return cls(
                id=str(row["id"]),
                source=str(row.get("source", "")),
                statement=str(row["statement"]),
                solution=row.get("solution"),
                rubric_scores=tuple(row.get("rubric_scores") or ()),
                avg_score=row.get("avg_score"),
            )
        except KeyError as exc:
            raise ValidationError(f"seed row missing field {exc}") from exc

    def to_dict(self) -> dict:
        row = {"id": self.id, "source": self.source, "statement": self.statement}
        if self.solution is not None:
            row["solution"] = self.solution
        if self.rubric_scores:
            row["rubric_scores"] = list(self.rubric_scores)
            row["avg_score"] = self.mean_score
        return row


@dataclass
class RawAtom:
    text: str
    source_problem: str
    embedding: np.ndarray

    @classmethod
    def make(cls, text: str, source_problem: str, embedding) -> "RawAtom":
        """Build a raw atom, L2-normalizing the embedding."""
        vec = np.asarray(embedding, dtype=np.float64)
        if vec.ndim != 1:
            raise ValidationError(f"atom from '{source_problem}': embedding must be 1-d")
        norm = float(np.linalg.norm(vec))
        if norm == 0.0 or not np.isfinite(norm):
            raise ValidationError(f"atom from '{source_problem}': embedding has no direction")
        return cls(text=text, source_problem=source_problem, embedding=vec / norm)


@dataclass(frozen=True)
class CognitiveAtom:
    atom_id: int
    canonical_text: str
    member_count: int
    members: tuple[int, ...]  # indices into the raw-atom list passed to dedup_atoms


def filter_seeds(problems: list[SeedProblem], min_avg: float) -> list[SeedProblem]:
    """Keep problems whose three-score rubric average is >= `min_avg`.

    Order is preserved. Problems without exactly three scores, or with a
    score outside [1,5], fail validation (they cannot be judged).
    """
    kept = []
    for p in problems:
        p.validate()
        if len(p.rubric_scores) != 3:
            raise ValidationError(
                f"seed '{p.id}': expected exactly 3 rubric scores, got {len(p.rubric_scores)}"
            )
        if p.mean_score >= min_avg:
            kept.append(p)
    return kept


def judge_seeds(
    problems: list[SeedProblem],
    judge: ChatClient,
    template_text: str,
    times: int = 3,
    max_retries: int = 2,
) -> list[SeedProblem]:
    """Score each problem `times` times with the rubric judge; fill rubric_scores.

    Unparseable judgments after retries are fail-closed to score 1.
    """
    judged = []
    for p in problems:
        prompt = template_text.format(statement=p.statement)
        request = ClientRequest(template_id="seed_rubric", rendered_prompt=prompt)
        scores = []
        for _ in range(times):
            value, _, _ = call_and_parse(judge, request, parse_strength, max_retries)
            scores.append(int(value) if value is not None else 1)
        judged.append(
            SeedProblem(
                id=p.id,
                source=p.source,
                statement=p.statement,
                solution=p.solution,
                rubric_scores=tuple(scores),
                avg_score=sum(scores) / len(scores),
            )
        )
    return judged


# ---------------------------------------------------------------------------
# Clustering


def _validate_matrix(vectors: np.ndarray) -> None:
    if vectors.ndim != 2:
        raise ValidationError("embeddings must share one fixed dimension")
    norms = np.linalg.norm(vectors, axis=1)
    bad = np.nonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)[0]
    if bad.size:
        raise ValidationError(f"embedding {int(bad[0])} is not unit-normalized (|v|={norms[bad[0]]:.6f})")


def _kmeans_partition(vectors: np.ndarray, k: int, rng_seed: int) -> list[list[int]]:
    from sklearn.cluster import MiniBatchKMeans

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # duplicate points legitimately yield < k clusters
        model = MiniBatchKMeans(
            n_clusters=k,
            random_state=rng_seed,
            n_init=3,
            batch_size=min(1024, len(vectors)),
            max_iter=100,
        )
        labels = model.fit_predict(vectors)
    groups: dict[int, list[int]] = {}
    for idx, label in enumerate(labels):
        groups.setdefault(int(label), []).append(idx)
    return [groups[label] for label in sorted(groups)]


def _centroid(vectors: np.ndarray, members: list[int]) -> np.ndarray:
    mean = vectors[members].mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0.0:
        # Perfectly antipodal members; fall back to the first member's direction.
        return vectors[members[0]].copy()
    return mean / norm


def cluster_embeddings(
    vectors: np.ndarray,
    cos_threshold: float,
    cluster_budget: int,
    rng_seed: int = 0,
) -> list[list[int]]:
    """Partition unit vectors: mini-batch k-means, then greedy centroid merging.

    Clusters whose centroids reach `cos_threshold` cosine similarity are
    merged (highest-similarity pair first; ties by lowest cluster ids) until
    all surviving centroids are strictly below the threshold. Returns member
    index lists ordered by each cluster's smallest member index.
    """
    n = len(vectors)
    if n == 0:
        return []
    if not 0.0 < cos_threshold <= 1.0:
        raise ValidationError(f"cos_threshold must be in (0,1], got {cos_threshold}")
    _validate_matrix(vectors)

    k = min(cluster_budget, n)
    if k >= n:
        parts = [[i] for i in range(n)]  # budget covers every atom; k-means is a no-op
    else:
        parts = _kmeans_partition(vectors, k, rng_seed)

    members: dict[int, list[int]] = {i: sorted(p) for i, p in enumerate(parts)}
    centroids: dict[int, np.ndarray] = {i: _centroid(vectors, p) for i, p in members.items()}
    alive = set(members)
    next_id = len(members)

    heap: list[tuple[float, int, int]] = []
    ids = sorted(alive)
    mat = np.stack([centroids[i] for i in ids])
    block = max(1, int(2e7) // max(1, len(ids)))
    for start in range(0, len(ids), block):
        sims = mat[start : start + block] @ mat.T
        for local_i, j in np.argwhere(sims >= cos_threshold):
            i = start + int(local_i)
            if i < int(j):
                heap.append((-float(sims[local_i, j]), ids[i], ids[int(j)]))
    heapq.heapify(heap)

    while heap:
        negsim, a, b = heapq.heappop(heap)
        if a not in alive or b not in alive:
            continue  # stale entry; one side was already merged away
        merged = next_id
        next_id += 1
        members[merged] = sorted(members.pop(a) + members.pop(b))
        alive.discard(a)
        alive.discard(b)
        centroids[merged] = _centroid(vectors, members[merged])
        del centroids[a], centroids[b]
        for other in sorted(alive):
            sim = float(centroids[merged] @ centroids[other])
            if sim >= cos_threshold:
                heapq.heappush(heap, (-sim, min(merged, other), max(merged, other)))
        alive.add(merged)

    return sorted((members[i] for i in alive), key=lambda m: m[0])


def dedup_atoms(
    raw: list[RawAtom],
    cos_threshold: float,
    cluster_budget: int,
    rng_seed: int = 0,
) -> list[CognitiveAtom]:
    """Deduplicate raw atoms into the canonical atom table.

    Produces a partition (every raw atom lands in exactly one cluster). The
    canonical text is the member closest to the cluster centroid, ties going
    to the lexicographically smallest text. Output atom_ids are contiguous
    from 0, ordered by each cluster's first raw-atom index.
    """
    if not raw:
        return []
    dim = raw[0].embedding.shape[0]
    for i, atom in enumerate(raw):
        if atom.embedding.shape != (dim,):
            raise ValidationError(
                f"atom {i}: embedding dimension {atom.embedding.shape} != ({dim},)"
            )
    vectors = np.stack([a.embedding for a in raw])
    partition = cluster_embeddings(vectors, cos_threshold, cluster_budget, rng_seed)

    table = []
    for atom_id, member_idxs in enumerate(partition):
        centroid = _centroid(vectors, member_idxs)
        best = min(member_idxs, key=lambda i: (-float(vectors[i] @ centroid), raw[i].text))
        table.append(
            CognitiveAtom(
                atom_id=atom_id,
                canonical_text=raw[best].text,
                member_count=len(member_idxs),
                members=tuple(member_idxs),
            )
        )
    return table
