"""Dataset analytics: type diversity and difficulty proxies.

Problem Type Diversity combines semantic-cluster coverage with cluster-size
uniformity:

    PTD = (N_c / sqrt(N)) * (1 - sigma_c / (mu_c * sqrt(N_c)))

Difficulty is proxied by answer consistency between two solver profiles
(identical normalized answers) and by the token budget their solutions
consume. Answer comparison is bit-exact after normalization; no symbolic
equivalence is attempted, so "1/2" and "0.5" stay distinct.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .atoms import cluster_embeddings
from .clients import EmbedderClient
from .errors import ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterStats:
    n_total: int
    n_clusters: int
    sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.n_total < 1 or self.n_clusters < 1:
            raise ValidationError("cluster statistics need at least one sample and one cluster")
        if len(self.sizes) != self.n_clusters:
            raise ValidationError(
                f"got {len(self.sizes)} sizes for n_clusters={self.n_clusters}"
            )
        if sum(self.sizes) != self.n_total:
            raise ValidationError(
                f"cluster sizes sum to {sum(self.sizes)}, expected n_total={self.n_total}"
            )

    @property
    def mu_c(self) -> float:
        return self.n_total / self.n_clusters

    @property
    def sigma_c(self) -> float:
        return float(np.asarray(self.sizes, dtype=np.float64).std())  # population std


def ptd_raw(stats: ClusterStats) -> float:
    """The diversity formula without clamping; may go negative on extreme skew."""
    coverage = stats.n_clusters / math.sqrt(stats.n_total)
    dispersion = stats.sigma_c / (stats.mu_c * math.sqrt(stats.n_clusters))
    return coverage * (1.0 - dispersion)


def ptd(stats: ClusterStats) -> float:
    """Problem Type Diversity, clamped below at zero (clamping is logged)."""
    value = ptd_raw(stats)
    if value < 0.0:
        log.warning("PTD %.6f clamped to 0 (dispersion term exceeded 1)", value)
        return 0.0
    return value


_WS = re.compile(r"\s+")


def normalize_answer(text: str) -> str:
    """Trim, unwrap outer \\boxed{}/\\$ layers, and collapse internal whitespace."""
    ans = text.strip()
    while True:
        if ans.startswith("\\boxed{") and ans.endswith("}"):
            ans = ans[len("\\boxed{") : -1].strip()
            continue
        if len(ans) >= 2 and ans.startswith("$") and ans.endswith("$"):
            ans = ans[1:-1].strip()
            continue
        break
    return _WS.sub(" ", ans)


@dataclass(frozen=True)
class DifficultyRecord:
    problem_id: str
    answers: dict[str, str]  # model tag -> normalized answer
    tokens: dict[str, int]
    consistent: bool

    @classmethod
    def make(cls, problem_id: str, answers: Mapping[str, str], tokens: Mapping[str, int]) -> "DifficultyRecord":
        normalized = {tag: normalize_answer(a) for tag, a in answers.items()}
        values = list(normalized.values())
        consistent = len(values) > 0 and all(v == values[0] for v in values)
        return cls(
            problem_id=problem_id,
            answers=normalized,
            tokens={t: int(n) for t, n in tokens.items()},
            consistent=consistent,
        )


@dataclass(frozen=True)
class ConsistencyResult:
    rate: float
    mean_tokens: float
    skipped: int
    n_used: int


def answer_consistency(
    records: Sequence[DifficultyRecord],
    model_tags: tuple[str, str],
) -> ConsistencyResult:
    """Fraction of records where both configured solvers agree, plus mean tokens.

    Records missing either tag are skipped and tallied; the mean is over the
    sum of both solvers' token counts per used record.
    """
    used = []
    skipped = 0
    for rec in records:
        if any(t not in rec.answers or t not in rec.tokens for t in model_tags):
            skipped += 1
            continue
        used.append(rec)
    if not used:
        return ConsistencyResult(rate=0.0, mean_tokens=0.0, skipped=skipped, n_used=0)
    consistent = sum(
        1 for r in used if r.answers[model_tags[0]] == r.answers[model_tags[1]]
    )
    token_sums = [r.tokens[model_tags[0]] + r.tokens[model_tags[1]] for r in used]
    return ConsistencyResult(
        rate=consistent / len(used),
        mean_tokens=sum(token_sums) / len(used),
        skipped=skipped,
        n_used=len(used),
    )


def cluster_problems(
    questions: Sequence[str],
    embedder: EmbedderClient,
    cos_threshold: float = 0.92,
    cluster_budget: int = 50_000,
    rng_seed: int = 0,
) -> ClusterStats:
    """Embed question texts and cluster them exactly like atom deduplication."""
    if not questions:
        raise ValidationError("cannot cluster an empty problem set")
    vectors = np.asarray(embedder.embed(list(questions)), dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValidationError("embedder returned a zero vector")
    vectors = vectors / norms
    partition = cluster_embeddings(vectors, cos_threshold, cluster_budget, rng_seed)
    sizes = tuple(len(p) for p in partition)
    return ClusterStats(n_total=len(questions), n_clusters=len(partition), sizes=sizes)
