import itertools
import random

import pytest
from hypothesis import given, strategies as st

from spatialforge.core import AnswerSpec
from spatialforge.gateway import (BackendResponse, Cassette, CassetteEntry,
                                  Gateway, canonical_hash)
from spatialforge.router import (ProberVerdict, RouterConfig, WrongAttemptCount,
                                 decide_route, grade_attempt, route_corpus)

from conftest import MockSpatialBackends, make_corpus

MC = AnswerSpec(kind="MultipleChoice", value="B", mc_options=("A", "B", "C", "D"))
NUM = AnswerSpec(kind="Numeric", value=1.0)

CFG = RouterConfig()


def verdicts(*flags):
    return [ProberVerdict(prober_id=f"p{i}", raw_answer="", correct=c)
            for i, c in enumerate(flags)]


class TestGradeAttempt:
    def test_mc_exact_match(self):
        assert grade_attempt("B", MC)
        assert grade_attempt(" b. ", MC)
        assert not grade_attempt("C", MC)

    def test_numeric_tolerance_boundary(self):
        # rel err 0.3 > tol 0.25
        assert not grade_attempt("1.3", NUM, tol=0.25)
        assert grade_attempt("1.2", NUM, tol=0.25)

    def test_unparseable_counts_incorrect(self):
        assert not grade_attempt("three", NUM)


class TestDecideRoute:
    def test_two_of_three_wrong_routes_visual(self):
        d = decide_route("s", verdicts(False, False, True), CFG)
        assert d.path == "VisualPath"

    def test_all_right_routes_text(self):
        assert decide_route("s", verdicts(True, True, True), CFG).path == "TextPath"

    def test_one_wrong_routes_text(self):
        assert decide_route("s", verdicts(False, True, True), CFG).path == "TextPath"

    def test_wrong_attempt_count(self):
        with pytest.raises(WrongAttemptCount):
            decide_route("s", verdicts(True, True), CFG)

    def test_permutation_invariance(self):
        for flags in itertools.product([True, False], repeat=3):
            paths = {decide_route("s", verdicts(*p), CFG).path
                     for p in itertools.permutations(flags)}
            assert len(paths) == 1

    @given(st.lists(st.booleans(), min_size=3, max_size=3))
    def test_monotone_in_failures(self, flags):
        base = decide_route("s", verdicts(*flags), CFG).path
        for k in range(3):
            worse = list(flags)
            worse[k] = False
            after = decide_route("s", verdicts(*worse), CFG).path
            if base == "VisualPath":
                assert after == "VisualPath"

    def test_brute_force_oracle_1000_triples(self):
        rng = random.Random(13)
        for _ in range(1000):
            flags = [rng.random() < 0.5 for _ in range(3)]
            expect = ("VisualPath"
                      if sum(not f for f in flags) / 3 >= CFG.failure_threshold
                      else "TextPath")
            assert decide_route("s", verdicts(*flags), CFG).path == expect


def _scripted_plan(n_visual: int, n_total: int) -> dict:
    plan = {}
    for i in range(n_total):
        wrong = [True, True, False] if i < n_visual else [False, False, False]
        plan[f"s{i:04d}"] = {"prober_wrong": wrong, "judge": "pass",
                             "examiner": "correct", "synth": "ok"}
    return plan


class TestRouteCorpus:
    def test_fixture_counts(self, tmp_path):
        samples = make_corpus(10)
        mock = MockSpatialBackends(samples, plan=_scripted_plan(6, 10))
        cassette = Cassette(tmp_path / "probes.jsonl")
        record = Gateway(mode="record", transport=mock, cassette=cassette)
        route_corpus(samples, CFG, record, seed=42)

        replay = Gateway(mode="replay", cassette=Cassette(tmp_path / "probes.jsonl"))
        rows, stats = route_corpus(samples, CFG, replay, seed=42)
        assert stats.visual_path == 6
        assert stats.text_path == 4
        assert [r["id"] for r in rows] == [s.id for s in samples]

    def test_empty_manifest(self, tmp_path):
        gw = Gateway(mode="replay", cassette=Cassette())
        rows, stats = route_corpus([], CFG, gw)
        assert rows == [] and stats.total == 0

    def test_missing_cassette_entry_isolated(self, tmp_path):
        samples = make_corpus(4)
        mock = MockSpatialBackends(samples, plan=_scripted_plan(0, 4))
        cassette = Cassette(tmp_path / "c.jsonl")
        record = Gateway(mode="record", transport=mock, cassette=cassette)
        route_corpus(samples, CFG, record, seed=1)
        # drop every entry belonging to one sample
        kept = Cassette()
        for h, e in cassette._entries.items():
            if e.request_echo["payload"]["sample_id"] != "s0002":
                kept.append(e)
        replay = Gateway(mode="replay", cassette=kept)
        rows, stats = route_corpus(samples, CFG, replay, seed=1)
        assert stats.routing_failed == 1
        assert rows[2]["routing"]["failed"] is True
        assert all(r["routing"].get("path") for i, r in enumerate(rows) if i != 2)

    def test_serial_equals_parallel_in_replay(self, tmp_path):
        samples = make_corpus(30)
        mock = MockSpatialBackends(samples)
        cassette = Cassette(tmp_path / "c.jsonl")
        route_corpus(samples, CFG,
                     Gateway(mode="record", transport=mock, cassette=cassette),
                     seed=5)
        replay = Gateway(mode="replay", cassette=Cassette(tmp_path / "c.jsonl"))
        serial, s_stats = route_corpus(samples, CFG, replay, seed=5, workers=1)
        parallel, p_stats = route_corpus(samples, CFG, replay, seed=5, workers=8)
        assert serial == parallel
        assert s_stats.to_json() == p_stats.to_json()
