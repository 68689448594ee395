"""Reasoning-combination refinement.

A combination starts from a backbone of the path's most strongly connected
atoms and grows to the target size K by cycling three operators:

* bridge replacement  — insert the node maximizing P(k|i) * P(j|k) between
  the weakest insertion-adjacent pair (i, j);
* counterfactual perturbation — add the path node least associated with the
  current combination (argmin over the max inbound conditional probability);
* path extension — append the first sufficiently strong successor
  (P(next|i) >= theta) scanning members in insertion order.

Every application, including no-ops, is recorded as a trace event whose
score is the operator's exact objective value, so an independent brute-force
replay can audit each choice. The loop stops at K or after one full round
without progress (the combination is then flagged incomplete).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

from .depgraph import DependencyGraph
from .errors import ValidationError
from .walker import ReasoningPath


class Op(str, Enum):
    BACKBONE = "backbone"
    BRIDGE = "bridge"
    COUNTERFACTUAL = "counterfactual"
    EXTENSION = "extension"
    GREEDY_PAD = "greedy_pad"


@dataclass(frozen=True)
class OperatorEvent:
    op: str
    added: tuple[int, ...]
    anchor: tuple[int, ...]
    score: float

    @property
    def is_noop(self) -> bool:
        return not self.added

    def to_dict(self) -> dict:
        return {"op": self.op, "added": list(self.added), "anchor": list(self.anchor), "score": self.score}


@dataclass(frozen=True)
class RefineConfig:
    target_k: int = 10
    backbone_m: int = 4
    theta: float = 0.4
    enable_bridge: bool = True
    enable_counterfactual: bool = True
    enable_extension: bool = True

    @property
    def cognitive_enabled(self) -> bool:
        return self.enable_bridge or self.enable_counterfactual or self.enable_extension

    def validate(self) -> None:
        if self.target_k < 1:
            raise ValidationError(f"target_k must be >= 1, got {self.target_k}")
        if self.backbone_m < 1:
            raise ValidationError(f"backbone_m must be >= 1, got {self.backbone_m}")
        if not 0.0 < self.theta <= 1.0:
            raise ValidationError(f"theta must be in (0,1], got {self.theta}")
        if self.target_k < self.backbone_m:
            raise ValidationError(
                f"target_k ({self.target_k}) must be >= backbone_m ({self.backbone_m})"
            )


@dataclass(frozen=True)
class ReasoningCombination:
    combo_id: str
    atoms: tuple[int, ...]  # insertion order; no duplicates
    source_path: str
    target_k: int
    operator_trace: tuple[OperatorEvent, ...] = ()
    incomplete: bool = False

    def __post_init__(self) -> None:
        if len(set(self.atoms)) != len(self.atoms):
            raise ValidationError(f"combination {self.combo_id} contains duplicate atoms")
        if len(self.atoms) > self.target_k:
            raise ValidationError(
                f"combination {self.combo_id} exceeds target size {self.target_k}"
            )

    def with_event(self, event: OperatorEvent, atoms: tuple[int, ...] | None = None) -> "ReasoningCombination":
        return replace(
            self,
            atoms=self.atoms if atoms is None else atoms,
            operator_trace=self.operator_trace + (event,),
        )

    def to_dict(self) -> dict:
        return {
            "combo_id": self.combo_id,
            "atoms": list(self.atoms),
            "source_path": self.source_path,
            "target_k": self.target_k,
            "incomplete": self.incomplete,
            "operator_trace": [e.to_dict() for e in self.operator_trace],
        }


def node_strength(g: DependencyGraph, v: int) -> int:
    """Total dependency strength incident to v (inbound plus outbound)."""
    return sum(s for (a, b), s in g.edges.items() if a == v or b == v)


def backbone_construction(
    path: ReasoningPath | Sequence[int],
    g: DependencyGraph,
    m: int,
    combo_id: str = "",
    target_k: int | None = None,
) -> ReasoningCombination:
    """Select the m path nodes with the highest total strength (ties: path order)."""
    nodes = tuple(path.nodes) if hasattr(path, "nodes") else tuple(path)
    if not nodes:
        raise ValidationError("cannot build a backbone from an empty path")
    source = path.path_id if hasattr(path, "path_id") else ""
    m = min(m, len(nodes))
    ranked = sorted(range(len(nodes)), key=lambda i: (-node_strength(g, nodes[i]), i))
    chosen_idx = sorted(ranked[:m])  # keep path order among the selected
    chosen = tuple(nodes[i] for i in chosen_idx)
    score = float(sum(node_strength(g, v) for v in chosen))
    event = OperatorEvent(op=Op.BACKBONE.value, added=chosen, anchor=(), score=score)
    return ReasoningCombination(
        combo_id=combo_id or f"c-{source or 'path'}",
        atoms=chosen,
        source_path=source,
        target_k=target_k if target_k is not None else max(len(chosen), 10),
        operator_trace=(event,),
    )


def weakest_adjacent_pair(c: ReasoningCombination, g: DependencyGraph) -> tuple[int, int, int]:
    """Insertion-adjacent pair (index, v_i, v_j) minimizing P(v_j | v_i)."""
    best_i, best_p = 0, float("inf")
    for i in range(len(c.atoms) - 1):
        p = g.cond_prob(c.atoms[i], c.atoms[i + 1])
        if p < best_p:
            best_i, best_p = i, p
    return best_i, c.atoms[best_i], c.atoms[best_i + 1]


def bridge_replacement(c: ReasoningCombination, g: DependencyGraph) -> ReasoningCombination:
    """Insert the best compound-strength bridge into the weakest adjacent pair.

    No-op when the combination is at target size, has fewer than two atoms,
    or every candidate's P(k|i) * P(j|k) is zero.
    """
    if len(c.atoms) >= c.target_k or len(c.atoms) < 2:
        return c.with_event(OperatorEvent(op=Op.BRIDGE.value, added=(), anchor=(), score=0.0))
    i, v_i, v_j = weakest_adjacent_pair(c, g)
    in_c = set(c.atoms)
    best_k, best_score = None, 0.0
    for v_k in sorted(g.nodes - in_c):
        score = g.cond_prob(v_i, v_k) * g.cond_prob(v_k, v_j)
        if score > best_score:
            best_k, best_score = v_k, score
    if best_k is None:
        return c.with_event(
            OperatorEvent(op=Op.BRIDGE.value, added=(), anchor=(v_i, v_j), score=0.0)
        )
    atoms = c.atoms[: i + 1] + (best_k,) + c.atoms[i + 1 :]
    return c.with_event(
        OperatorEvent(op=Op.BRIDGE.value, added=(best_k,), anchor=(v_i, v_j), score=best_score),
        atoms=atoms,
    )


def counterfactual_perturbation(
    c: ReasoningCombination,
    path: ReasoningPath | Sequence[int],
    g: DependencyGraph,
) -> ReasoningCombination:
    """Add the path node minimally associated with the combination.

    Association of candidate v is max over members v_j of P(v_j | v); fully
    unlinked candidates score 0 and win. No-op when the path is exhausted.
    """
    if len(c.atoms) >= c.target_k:
        return c.with_event(OperatorEvent(op=Op.COUNTERFACTUAL.value, added=(), anchor=(), score=0.0))
    nodes = tuple(path.nodes) if hasattr(path, "nodes") else tuple(path)
    in_c = set(c.atoms)
    candidates = sorted(set(nodes) - in_c)
    if not candidates:
        return c.with_event(OperatorEvent(op=Op.COUNTERFACTUAL.value, added=(), anchor=(), score=0.0))
    best_v, best_score, best_anchor = None, float("inf"), ()
    for v in candidates:
        assoc, anchor = 0.0, ()
        for v_j in c.atoms:
            p = g.cond_prob(v, v_j)
            if p > assoc:
                assoc, anchor = p, (v_j,)
        if assoc < best_score:
            best_v, best_score, best_anchor = v, assoc, anchor
    return c.with_event(
        OperatorEvent(
            op=Op.COUNTERFACTUAL.value, added=(best_v,), anchor=best_anchor, score=best_score
        ),
        atoms=c.atoms + (best_v,),
    )


def path_extension(
    c: ReasoningCombination, g: DependencyGraph, theta: float
) -> ReasoningCombination:
    """Append the first member's successor clearing the dependency threshold.

    Members are scanned in insertion order; among one member's qualifying
    successors the highest P wins (ties: lower atom id). Boundary inclusive:
    P == theta qualifies.
    """
    if len(c.atoms) >= c.target_k:
        return c.with_event(OperatorEvent(op=Op.EXTENSION.value, added=(), anchor=(), score=0.0))
    in_c = set(c.atoms)
    for v_i in c.atoms:
        qualifying = [
            (g.cond_prob(v_i, v_next), v_next)
            for v_next in sorted(g.successors(v_i))
            if v_next not in in_c and g.cond_prob(v_i, v_next) >= theta
        ]
        if qualifying:
            p, v_next = max(qualifying, key=lambda t: (t[0], -t[1]))
            return c.with_event(
                OperatorEvent(op=Op.EXTENSION.value, added=(v_next,), anchor=(v_i,), score=p),
                atoms=c.atoms + (v_next,),
            )
    return c.with_event(OperatorEvent(op=Op.EXTENSION.value, added=(), anchor=(), score=0.0))


def _greedy_pad(
    c: ReasoningCombination,
    path_nodes: tuple[int, ...],
    g: DependencyGraph,
) -> ReasoningCombination:
    """Ablation fallback: fill with remaining path nodes by total strength."""
    remaining = [v for v in path_nodes if v not in set(c.atoms)]
    order = {v: i for i, v in enumerate(path_nodes)}
    remaining.sort(key=lambda v: (-node_strength(g, v), order[v]))
    for v in remaining:
        if len(c.atoms) >= c.target_k:
            break
        c = c.with_event(
            OperatorEvent(op=Op.GREEDY_PAD.value, added=(v,), anchor=(), score=float(node_strength(g, v))),
            atoms=c.atoms + (v,),
        )
    return c


def refine_combination(
    path: ReasoningPath | Sequence[int],
    g: DependencyGraph,
    cfg: RefineConfig,
    combo_id: str = "",
) -> ReasoningCombination:
    """Grow a backbone to K atoms with the operator cycle of the refinement loop.

    Operator order within a round is bridge, counterfactual, extension; an
    operator that would overshoot K is skipped. One full round with no
    additions terminates the loop and the combination is flagged incomplete.
    With all operators disabled the backbone is padded greedily instead.
    """
    cfg.validate()
    nodes = tuple(path.nodes) if hasattr(path, "nodes") else tuple(path)
    m = min(cfg.backbone_m, len(nodes), cfg.target_k)
    c = backbone_construction(path, g, m, combo_id=combo_id, target_k=cfg.target_k)

    if not cfg.cognitive_enabled:
        c = _greedy_pad(c, nodes, g)
        return replace(c, incomplete=len(c.atoms) < cfg.target_k)

    while len(c.atoms) < cfg.target_k:
        before = len(c.atoms)
        if cfg.enable_bridge and len(c.atoms) < cfg.target_k:
            c = bridge_replacement(c, g)
        if cfg.enable_counterfactual and len(c.atoms) < cfg.target_k:
            c = counterfactual_perturbation(c, path, g)
        if cfg.enable_extension and len(c.atoms) < cfg.target_k:
            c = path_extension(c, g, cfg.theta)
        if len(c.atoms) == before:
            return replace(c, incomplete=True)
    return c
