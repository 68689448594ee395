from __future__ import annotations

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogatom.clients import HashChatClient, ScriptedClient
from cogatom.depgraph import (
    StrengthRecord,
    build_dependency_graph,
    conditional_prob,
    elicit_strengths,
)
from cogatom.errors import ValidationError

TEMPLATE = "A: {from_atom}\nB: {to_atom}"


class TestBuildDependencyGraph:
    def test_threshold_keeps_three_and_five(self):
        records = [
            StrengthRecord(1, 2, 2),
            StrengthRecord(2, 3, 3),
            StrengthRecord(1, 3, 5),
        ]
        g = build_dependency_graph([1, 2, 3], records)
        assert g.edges == {(2, 3): 3, (1, 3): 5}

    def test_all_ones_gives_empty_valid_graph(self):
        records = [StrengthRecord(u, v, 1) for u in (1, 2) for v in (1, 2) if u != v]
        g = build_dependency_graph([1, 2], records)
        assert g.edges == {}
        assert g.nodes == frozenset({1, 2})

    def test_duplicate_keeps_max_and_warns(self, caplog):
        records = [StrengthRecord(1, 2, 3), StrengthRecord(1, 2, 5)]
        with caplog.at_level(logging.WARNING):
            g = build_dependency_graph([1, 2], records)
        assert g.edges[(1, 2)] == 5
        assert any("duplicate strength" in r.message for r in caplog.records)

    def test_node_outside_path_rejected(self):
        with pytest.raises(ValidationError, match="outside the path"):
            build_dependency_graph([1, 2], [StrengthRecord(1, 9, 4)])

    def test_self_dependency_rejected(self):
        with pytest.raises(ValidationError, match="itself"):
            build_dependency_graph([1, 2], [StrengthRecord(1, 1, 4)])

    def test_strength_out_of_range_rejected(self):
        with pytest.raises(ValidationError, match="outside"):
            build_dependency_graph([1, 2], [StrengthRecord(1, 2, 6)])

    def test_determinism(self):
        records = [StrengthRecord(1, 2, 4), StrengthRecord(2, 1, 3), StrengthRecord(1, 3, 5)]
        g1 = build_dependency_graph([1, 2, 3], records)
        g2 = build_dependency_graph([1, 2, 3], list(records))
        assert g1.edges == g2.edges
        assert g1._cond == g2._cond


class TestConditionalProb:
    def successor_graph(self):
        records = [
            StrengthRecord(0, 1, 3),
            StrengthRecord(0, 2, 4),
            StrengthRecord(0, 3, 5),
            StrengthRecord(4, 5, 4),
        ]
        return build_dependency_graph([0, 1, 2, 3, 4, 5], records)

    def test_three_successors_normalize(self):
        g = self.successor_graph()
        assert conditional_prob(g, 0, 1) == pytest.approx(0.25, abs=1e-12)
        assert conditional_prob(g, 0, 2) == pytest.approx(1 / 3, abs=1e-12)
        assert conditional_prob(g, 0, 3) == pytest.approx(5 / 12, abs=1e-12)

    def test_single_successor_is_certain(self):
        g = self.successor_graph()
        assert conditional_prob(g, 4, 5) == 1.0

    def test_absent_edge_is_zero(self):
        g = self.successor_graph()
        assert conditional_prob(g, 1, 0) == 0.0
        assert conditional_prob(g, 5, 4) == 0.0  # node with no successors


def random_dependency_graph(rng: np.random.Generator):
    n = int(rng.integers(3, 12))
    nodes = list(range(n))
    records = []
    for u in nodes:
        for v in nodes:
            if u != v and rng.random() < 0.4:
                records.append(StrengthRecord(u, v, int(rng.integers(1, 6))))
    return build_dependency_graph(nodes, records)


def test_normalization_over_1000_random_graphs():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        g = random_dependency_graph(rng)
        assert all(s >= 3 for s in g.edges.values())
        for v in g.nodes:
            succ = g.successors(v)
            if succ:
                total = sum(g.cond_prob(v, u) for u in succ)
                assert abs(total - 1.0) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(min_value=0, max_value=100_000))
def test_normalization_property(seed):
    g = random_dependency_graph(np.random.default_rng(seed))
    for v in g.nodes:
        succ = g.successors(v)
        if succ:
            assert sum(g.cond_prob(v, u) for u in succ) == pytest.approx(1.0, abs=1e-9)


class TestElicitStrengths:
    texts = {1: "alpha concept", 2: "beta concept", 3: "gamma concept"}

    def test_all_pairs_mode_covers_every_ordered_pair(self):
        records = elicit_strengths([1, 2, 3], self.texts, HashChatClient("judge"), TEMPLATE)
        assert {(r.from_atom, r.to_atom) for r in records} == {
            (u, v) for u in (1, 2, 3) for v in (1, 2, 3) if u != v
        }

    def test_adjacent_mode_covers_consecutive_pairs_both_ways(self):
        records = elicit_strengths(
            [1, 2, 3], self.texts, HashChatClient("judge"), TEMPLATE, mode="adjacent"
        )
        assert [(r.from_atom, r.to_atom) for r in records] == [(1, 2), (2, 1), (2, 3), (3, 2)]

    def test_cache_reuses_judgments_across_paths(self):
        cache: dict = {}
        transcript: list = []
        judge = HashChatClient("judge")
        elicit_strengths([1, 2], self.texts, judge, TEMPLATE, cache=cache, transcript=transcript)
        first_calls = len(transcript)
        elicit_strengths([1, 2, 3], self.texts, judge, TEMPLATE, cache=cache, transcript=transcript)
        # pairs (1,2) and (2,1) were cached; only pairs touching 3 are new
        assert len(transcript) - first_calls == 4

    def test_unparseable_fail_closed_to_strength_one(self):
        judge = ScriptedClient(["no idea"] * 3 + ["8"] * 3)
        records = elicit_strengths([1, 2], self.texts, judge, TEMPLATE, max_retries=2)
        assert all(r.raw_strength == 1 for r in records)
        assert all(r.judge_provenance.endswith(":missing") for r in records)
        g = build_dependency_graph([1, 2], records)
        assert g.edges == {}

    def test_retry_then_parse(self):
        judge = ScriptedClient(["??", "strength: 4", "3"])
        records = elicit_strengths([1, 2], self.texts, judge, TEMPLATE, mode="adjacent", max_retries=2)
        assert records[0].raw_strength == 4
        assert records[1].raw_strength == 3
        assert len(judge.calls) == 3

    def test_replayed_transcript_is_deterministic(self):
        t1: list = []
        t2: list = []
        elicit_strengths([1, 2, 3], self.texts, HashChatClient("judge"), TEMPLATE, transcript=t1)
        elicit_strengths([1, 2, 3], self.texts, HashChatClient("judge"), TEMPLATE, transcript=t2)
        assert t1 == t2

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValidationError, match="mode"):
            elicit_strengths([1, 2], self.texts, HashChatClient(), TEMPLATE, mode="chain")
