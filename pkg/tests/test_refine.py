from __future__ import annotations

import numpy as np
import pytest

from cogatom.depgraph import DependencyGraph, StrengthRecord, build_dependency_graph
from cogatom.errors import ValidationError
from cogatom.refine import (
    Op,
    ReasoningCombination,
    RefineConfig,
    backbone_construction,
    bridge_replacement,
    counterfactual_perturbation,
    node_strength,
    path_extension,
    refine_combination,
)

TOL = 1e-12


def stub_dep(nodes, cond: dict[tuple[int, int], float]) -> DependencyGraph:
    """Dependency graph with directly injected conditional probabilities."""
    g = DependencyGraph(nodes=frozenset(nodes))
    for (u, v), p in cond.items():
        g._succ.setdefault(u, {})[v] = 3
        g._cond[(u, v)] = p
    return g


def combo(atoms, target_k=10) -> ReasoningCombination:
    return ReasoningCombination(
        combo_id="t", atoms=tuple(atoms), source_path="p", target_k=target_k
    )


# ---------------------------------------------------------------------------
# Independent oracle: replays a trace by exhaustive re-evaluation of the
# three selection rules, tracking the combination state step by step.


def oracle_replay(path_nodes, g: DependencyGraph, cfg: RefineConfig, result: ReasoningCombination):
    def brute_strength(v):
        return sum(s for (a, b), s in g.edges.items() if a == v or b == v)

    atoms: list[int] = []
    for event in result.operator_trace:
        if event.op == Op.BACKBONE.value:
            m = len(event.added)
            ranked = sorted(
                range(len(path_nodes)), key=lambda i: (-brute_strength(path_nodes[i]), i)
            )
            expected = [path_nodes[i] for i in sorted(ranked[:m])]
            assert list(event.added) == expected
            assert abs(event.score - sum(brute_strength(v) for v in expected)) <= TOL
            atoms = list(expected)
        elif event.op == Op.BRIDGE.value:
            if not event.added:
                if len(atoms) < result.target_k and len(atoms) >= 2:
                    i, v_i, v_j = min(
                        ((i, atoms[i], atoms[i + 1]) for i in range(len(atoms) - 1)),
                        key=lambda t: (g.cond_prob(t[1], t[2]), t[0]),
                    )
                    best = max(
                        (g.cond_prob(v_i, k) * g.cond_prob(k, v_j) for k in g.nodes - set(atoms)),
                        default=0.0,
                    )
                    assert best == 0.0
                continue
            i, v_i, v_j = min(
                ((i, atoms[i], atoms[i + 1]) for i in range(len(atoms) - 1)),
                key=lambda t: (g.cond_prob(t[1], t[2]), t[0]),
            )
            assert event.anchor == (v_i, v_j)
            candidates = sorted(g.nodes - set(atoms))
            scores = {k: g.cond_prob(v_i, k) * g.cond_prob(k, v_j) for k in candidates}
            best_score = max(scores.values())
            best_k = min(k for k, s in scores.items() if s == best_score)
            assert event.added == (best_k,)
            assert abs(event.score - best_score) <= TOL
            atoms.insert(i + 1, best_k)
        elif event.op == Op.COUNTERFACTUAL.value:
            if not event.added:
                assert len(atoms) >= result.target_k or not set(path_nodes) - set(atoms)
                continue
            candidates = sorted(set(path_nodes) - set(atoms))
            assoc = {v: max((g.cond_prob(v, j) for j in atoms), default=0.0) for v in candidates}
            best_score = min(assoc.values())
            best_v = min(v for v, s in assoc.items() if s == best_score)
            assert event.added == (best_v,)
            assert abs(event.score - best_score) <= TOL
            atoms.append(best_v)
        elif event.op == Op.EXTENSION.value:
            if not event.added:
                if len(atoms) < result.target_k:
                    for v_i in atoms:
                        assert not any(
                            g.cond_prob(v_i, nxt) >= cfg.theta
                            for nxt in g.successors(v_i)
                            if nxt not in atoms
                        )
                continue
            expected = None
            for v_i in atoms:
                qualifying = [
                    (g.cond_prob(v_i, nxt), nxt)
                    for nxt in g.successors(v_i)
                    if nxt not in atoms and g.cond_prob(v_i, nxt) >= cfg.theta
                ]
                if qualifying:
                    best_p = max(p for p, _ in qualifying)
                    expected = (v_i, min(nxt for p, nxt in qualifying if p == best_p), best_p)
                    break
            assert expected is not None
            assert event.anchor == (expected[0],)
            assert event.added == (expected[1],)
            assert abs(event.score - expected[2]) <= TOL
            atoms.append(expected[1])
        elif event.op == Op.GREEDY_PAD.value:
            remaining = [v for v in path_nodes if v not in atoms]
            order = {v: i for i, v in enumerate(path_nodes)}
            remaining.sort(key=lambda v: (-brute_strength(v), order[v]))
            assert event.added == (remaining[0],)
            atoms.append(remaining[0])
    assert tuple(atoms) == result.atoms


class TestBackbone:
    def test_empty_graph_ties_break_by_path_order(self):
        g = build_dependency_graph([1, 2, 3, 4, 5], [])
        c = backbone_construction([1, 2, 3, 4, 5], g, m=3)
        assert c.atoms == (1, 2, 3)

    def test_highest_strength_wins(self):
        g = build_dependency_graph(
            [1, 2, 3, 4], [StrengthRecord(1, 2, 4), StrengthRecord(2, 3, 5)]
        )
        assert node_strength(g, 2) == 9  # brute-force oracle for the toy graph
        assert node_strength(g, 1) == 4
        assert node_strength(g, 3) == 5
        c = backbone_construction([1, 2, 3, 4], g, m=1)
        assert c.atoms == (2,)

    def test_m_saturates_to_whole_path(self):
        g = build_dependency_graph([3, 1, 2], [])
        c = backbone_construction([3, 1, 2], g, m=3)
        assert c.atoms == (3, 1, 2)

    def test_empty_path_rejected(self):
        with pytest.raises(ValidationError, match="empty path"):
            backbone_construction([], build_dependency_graph([1], []), m=1)


class TestBridge:
    def test_best_compound_product_inserted_between_pair(self):
        g = stub_dep([1, 2, 7, 9], {(1, 7): 0.5, (7, 2): 0.2, (1, 9): 0.3, (9, 2): 0.4})
        out = bridge_replacement(combo([1, 2], target_k=4), g)
        event = out.operator_trace[-1]
        assert out.atoms == (1, 9, 2)  # 0.3*0.4 = 0.12 beats 0.5*0.2 = 0.10
        assert event.score == pytest.approx(0.12, abs=TOL)
        assert event.anchor == (1, 2)

    def test_tie_goes_to_lower_atom_id(self):
        g = stub_dep([1, 2, 7, 9], {(1, 7): 0.3, (7, 2): 0.4, (1, 9): 0.4, (9, 2): 0.3})
        out = bridge_replacement(combo([1, 2], target_k=4), g)
        assert out.operator_trace[-1].added == (7,)

    def test_no_candidates_is_noop(self):
        g = stub_dep([1, 2], {(1, 2): 0.9})
        out = bridge_replacement(combo([1, 2], target_k=4), g)
        assert out.atoms == (1, 2)
        assert out.operator_trace[-1].is_noop

    def test_zero_compound_scores_is_noop(self):
        g = stub_dep([1, 2, 7], {(1, 2): 0.9})  # 7 unconnected
        out = bridge_replacement(combo([1, 2], target_k=4), g)
        assert out.atoms == (1, 2)

    def test_at_target_k_is_skipped(self):
        g = stub_dep([1, 2, 7], {(1, 7): 0.5, (7, 2): 0.5})
        out = bridge_replacement(combo([1, 2], target_k=2), g)
        assert out.atoms == (1, 2)

    def test_weakest_pair_selected(self):
        # pairs: (1,2) p=0.9, (2,3) p=0.1 -> bridge the (2,3) gap
        g = stub_dep(
            [1, 2, 3, 8],
            {(1, 2): 0.9, (2, 3): 0.1, (2, 8): 0.6, (8, 3): 0.7, (1, 8): 0.9, (8, 2): 0.9},
        )
        out = bridge_replacement(combo([1, 2, 3], target_k=5), g)
        assert out.atoms == (1, 2, 8, 3)
        assert out.operator_trace[-1].anchor == (2, 3)


class TestCounterfactual:
    def test_least_associated_added(self):
        g = stub_dep([1, 2, 5, 6], {(5, 1): 0.6, (6, 2): 0.1})
        out = counterfactual_perturbation(combo([1, 2], target_k=4), [1, 2, 5, 6], g)
        event = out.operator_trace[-1]
        assert out.atoms == (1, 2, 6)
        assert event.score == pytest.approx(0.1, abs=TOL)

    def test_unlinked_candidate_preferred(self):
        g = stub_dep([1, 2, 5, 8], {(5, 1): 0.2})
        out = counterfactual_perturbation(combo([1, 2], target_k=4), [1, 2, 5, 8], g)
        assert out.atoms == (1, 2, 8)  # 8 has no edges into C: association 0
        assert out.operator_trace[-1].score == 0.0

    def test_exhausted_path_is_noop(self):
        g = stub_dep([1, 2], {})
        out = counterfactual_perturbation(combo([1, 2], target_k=4), [1, 2], g)
        assert out.atoms == (1, 2)
        assert out.operator_trace[-1].is_noop


class TestExtension:
    def test_successor_above_threshold_appended(self):
        g = stub_dep([1, 2, 5], {(1, 5): 0.45})
        out = path_extension(combo([1, 2], target_k=4), g, theta=0.4)
        assert out.atoms == (1, 2, 5)
        assert out.operator_trace[-1].score == pytest.approx(0.45, abs=TOL)

    def test_all_below_threshold_is_noop(self):
        g = stub_dep([1, 2, 5], {(1, 5): 0.39, (2, 5): 0.2})
        out = path_extension(combo([1, 2], target_k=4), g, theta=0.4)
        assert out.atoms == (1, 2)

    def test_boundary_theta_inclusive(self):
        g = stub_dep([1, 2, 5], {(1, 5): 1.0})
        out = path_extension(combo([1, 2], target_k=4), g, theta=1.0)
        assert out.atoms == (1, 2, 5)

    def test_first_member_with_qualifier_wins(self):
        g = stub_dep([1, 2, 5, 6], {(2, 5): 0.9, (1, 6): 0.5})
        out = path_extension(combo([1, 2], target_k=4), g, theta=0.4)
        assert out.atoms == (1, 2, 6)  # member 1 scanned before member 2
        assert out.operator_trace[-1].anchor == (1,)


class TestRefineCombination:
    def test_backbone_at_k_skips_loop(self):
        g = build_dependency_graph([1, 2, 3], [])
        cfg = RefineConfig(target_k=3, backbone_m=3)
        c = refine_combination([1, 2, 3], g, cfg)
        assert c.atoms == (1, 2, 3)
        assert [e.op for e in c.operator_trace] == [Op.BACKBONE.value]
        assert not c.incomplete

    def test_refine_case_1_matches_expected_and_oracle(self, refine_case_1):
        case = refine_case_1
        cfg = RefineConfig(**case["config"])
        result = refine_combination(case["path"], case["dep_graph"], cfg)
        assert list(result.atoms) == case["expected_atoms"]
        assert not result.incomplete
        ops = [e.op for e in result.operator_trace if not e.is_noop]
        assert ops == ["backbone", "bridge", "counterfactual", "extension"]
        oracle_replay(case["path"], case["dep_graph"], cfg, result)

    def test_refine_case_1_hand_values(self, refine_case_1):
        case = refine_case_1
        result = refine_combination(
            case["path"], case["dep_graph"], RefineConfig(**case["config"])
        )
        by_op = {e.op: e for e in result.operator_trace if not e.is_noop}
        assert by_op["bridge"].added == (13,)
        assert by_op["bridge"].score == pytest.approx(5 / 8, abs=TOL)
        assert by_op["counterfactual"].added == (10,)
        assert by_op["counterfactual"].score == pytest.approx(3 / 8, abs=TOL)
        assert by_op["extension"].added == (11,)
        assert by_op["extension"].score == pytest.approx(5 / 8, abs=TOL)

    def test_cognitive_disabled_pads_greedily(self, refine_case_1):
        case = refine_case_1
        cfg = RefineConfig(
            target_k=5,
            backbone_m=2,
            enable_bridge=False,
            enable_counterfactual=False,
            enable_extension=False,
        )
        result = refine_combination(case["path"], case["dep_graph"], cfg)
        ops = [e.op for e in result.operator_trace]
        assert ops == ["backbone", "greedy_pad", "greedy_pad", "greedy_pad"]
        # oracle: remaining path nodes sorted by total strength, ties by path order
        g = case["dep_graph"]
        assert result.atoms == (12, 15, 11, 13, 10)
        assert node_strength(g, 11) == node_strength(g, 13) == 12  # tie, path order
        oracle_replay(case["path"], g, cfg, result)

    def test_stall_flags_incomplete(self):
        g = build_dependency_graph([1, 2, 3], [])
        cfg = RefineConfig(target_k=10, backbone_m=2)
        c = refine_combination([1, 2, 3], g, cfg)
        assert c.incomplete
        assert len(c.atoms) <= 10

    def test_invalid_config_rejected(self):
        g = build_dependency_graph([1, 2], [])
        with pytest.raises(ValidationError, match="target_k"):
            refine_combination([1, 2], g, RefineConfig(target_k=2, backbone_m=4))


def random_path_and_graph(rng: np.random.Generator, n_lo=4, n_hi=16):
    n = int(rng.integers(n_lo, n_hi))
    nodes = list(range(n))
    records = []
    for u in nodes:
        for v in nodes:
            if u != v and rng.random() < 0.25:
                records.append(StrengthRecord(u, v, int(rng.integers(1, 6))))
    return nodes, build_dependency_graph(nodes, records)


class TestSizeLawAndTraceInvariants:
    def test_size_law_over_random_graphs(self):
        rng = np.random.default_rng(7)
        cfg = RefineConfig()  # default K = 10
        completed = 0
        for _ in range(200):
            nodes, g = random_path_and_graph(rng)
            c = refine_combination(nodes, g, cfg)
            assert len(c.atoms) <= cfg.target_k
            if not c.incomplete:
                assert len(c.atoms) == 10
                completed += 1
            else:
                assert len(c.atoms) < 10
        assert completed > 0  # long paths must complete via the operator cycle

    def test_monotone_growth_and_trace_completeness(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            nodes, g = random_path_and_graph(rng)
            cfg = RefineConfig(target_k=8, backbone_m=3)
            c = refine_combination(nodes, g, cfg)
            size = 0
            for event in c.operator_trace:
                if event.op == Op.BACKBONE.value:
                    size = len(event.added)
                else:
                    size += len(event.added)  # additions only: growth is monotone
            assert size == len(c.atoms)
            m = len(c.operator_trace[0].added)
            non_noops = sum(1 for e in c.operator_trace[1:] if not e.is_noop)
            assert len(c.atoms) - m == non_noops

    def test_trace_replay_oracle_over_random_graphs(self):
        rng = np.random.default_rng(9)
        cfg = RefineConfig(target_k=7, backbone_m=2, theta=0.3)
        for _ in range(50):
            nodes, g = random_path_and_graph(rng)
            c = refine_combination(nodes, g, cfg)
            oracle_replay(nodes, g, cfg, c)

    def test_determinism(self):
        rng = np.random.default_rng(10)
        nodes, g = random_path_and_graph(rng)
        cfg = RefineConfig(target_k=6, backbone_m=2)
        assert refine_combination(nodes, g, cfg) == refine_combination(nodes, g, cfg)
