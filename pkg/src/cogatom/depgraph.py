"""Per-path directed dependency graphs with judged edge strengths.

For each sampled path, a judge rates the logical dependency of every ordered
atom pair on a 1-5 scale. Ratings below 3 are dropped as noise; what remains
defines conditional probabilities P(j|i) = s_ij / sum of s_ik over the
successors k of i, the quantity the refinement operators optimize.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .clients import ChatClient, ClientRequest, call_and_parse, parse_strength, prompt_hash
from .errors import ValidationError

log = logging.getLogger(__name__)

STRENGTH_THRESHOLD = 3


@dataclass(frozen=True)
class StrengthRecord:
    from_atom: int
    to_atom: int
    raw_strength: int
    judge_provenance: str = ""

    def validate(self) -> None:
        if self.from_atom == self.to_atom:
            raise ValidationError(f"dependency of atom {self.from_atom} on itself")
        if not 1 <= self.raw_strength <= 5:
            raise ValidationError(
                f"strength {self.raw_strength} for ({self.from_atom},{self.to_atom}) outside [1,5]"
            )


@dataclass
class DependencyGraph:
    nodes: frozenset[int]
    edges: dict[tuple[int, int], int] = field(default_factory=dict)
    _succ: dict[int, dict[int, int]] = field(default_factory=dict, repr=False)
    _cond: dict[tuple[int, int], float] = field(default_factory=dict, repr=False)

    def successors(self, v: int) -> dict[int, int]:
        return self._succ.get(v, {})

    def cond_prob(self, v_i: int, v_j: int) -> float:
        return self._cond.get((v_i, v_j), 0.0)


def build_dependency_graph(
    path,
    strengths: Iterable[StrengthRecord],
    threshold: int = STRENGTH_THRESHOLD,
) -> DependencyGraph:
    """Keep records at or above the strength threshold and cache P(j|i).

    `path` may be a ReasoningPath or a plain node sequence. Pairs without a
    record are treated as strength 1 and therefore dropped; duplicate records
    for one pair keep the maximum strength (logged).
    """
    nodes = tuple(path.nodes) if hasattr(path, "nodes") else tuple(path)
    node_set = frozenset(nodes)
    raw: dict[tuple[int, int], int] = {}
    for rec in strengths:
        rec.validate()
        if rec.from_atom not in node_set or rec.to_atom not in node_set:
            raise ValidationError(
                f"strength record ({rec.from_atom}->{rec.to_atom}) references a node "
                f"outside the path"
            )
        key = (rec.from_atom, rec.to_atom)
        if key in raw:
            log.warning(
                "duplicate strength for pair %s: keeping max(%d, %d)",
                key,
                raw[key],
                rec.raw_strength,
            )
            raw[key] = max(raw[key], rec.raw_strength)
        else:
            raw[key] = rec.raw_strength

    g = DependencyGraph(nodes=node_set)
    for (u, v), s in sorted(raw.items()):
        if s >= threshold:
            g.edges[(u, v)] = s
            g._succ.setdefault(u, {})[v] = s
    for u, succ in g._succ.items():
        total = sum(succ.values())
        for v, s in succ.items():
            g._cond[(u, v)] = s / total
    return g


def conditional_prob(g: DependencyGraph, v_i: int, v_j: int) -> float:
    """P(v_j | v_i); 0.0 for absent edges or successor-less nodes."""
    return g.cond_prob(v_i, v_j)


def elicit_strengths(
    path_nodes: Sequence[int],
    atom_texts: Mapping[int, str],
    judge: ChatClient,
    template_text: str,
    mode: str = "all_pairs",
    max_retries: int = 2,
    cache: dict[tuple[int, int], StrengthRecord] | None = None,
    transcript: list[dict] | None = None,
) -> list[StrengthRecord]:
    """Ask the judge for every ordered pair's dependency strength.

    `mode` is "all_pairs" (default, quadratic in the short path length) or
    "adjacent" (walk-consecutive pairs only, both directions). Unparseable
    responses after retries are fail-closed to strength 1 so the threshold
    drops them. A shared `cache` lets repeated paths reuse judgments.
    """
    if mode not in ("all_pairs", "adjacent"):
        raise ValidationError(f"unknown elicitation mode '{mode}'")
    if cache is None:
        cache = {}

    if mode == "all_pairs":
        pairs = [(u, v) for u in path_nodes for v in path_nodes if u != v]
    else:
        pairs = []
        for a, b in zip(path_nodes, path_nodes[1:]):
            pairs.extend([(a, b), (b, a)])

    records = []
    for u, v in pairs:
        cached = cache.get((u, v))
        if cached is not None:
            records.append(cached)
            continue
        prompt = template_text.format(from_atom=atom_texts[u], to_atom=atom_texts[v])
        request = ClientRequest(template_id="dependency_strength", rendered_prompt=prompt)
        value, response, attempts = call_and_parse(judge, request, parse_strength, max_retries)
        provenance = prompt_hash("dependency_strength", prompt)[:16]
        if value is None:
            log.warning("judge response for pair (%d,%d) unparseable; treating as strength 1", u, v)
            rec = StrengthRecord(u, v, 1, judge_provenance=f"{provenance}:missing")
        else:
            rec = StrengthRecord(u, v, int(value), judge_provenance=provenance)
        if transcript is not None:
            transcript.append(
                {
                    "from": u,
                    "to": v,
                    "prompt_hash": prompt_hash("dependency_strength", prompt),
                    "response_text": response.text if response is not None else "",
                    "token_count": response.token_count if response is not None else 0,
                    "parsed_strength": rec.raw_strength if value is not None else None,
                    "attempts": attempts,
                }
            )
        cache[(u, v)] = rec
        records.append(rec)
    return records
