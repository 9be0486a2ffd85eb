from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from cepmas.errors import MissingLevel
from cepmas.evaluation import (
    CRITERIA,
    Criterion,
    EvalScorecard,
    aggregate_scorecards,
    judge_prompt,
    parse_judge_reply,
    quantize_score,
    score_description,
    scorecards_from_csv,
    scorecards_to_csv,
)
from cepmas.experiments import load_table3_fixture, table3_judge_script
from cepmas.frames import COMPLEXITY_LEVELS, reference_description
from cepmas.gateway import GatewayResponse, ScriptedBackend


class SequenceJudge:
    """Replies with a fixed series of raw strings, one per request."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        if not self.replies:
            return GatewayResponse(content="1.0")
        return GatewayResponse(content=self.replies.pop(0))


class TestQuantization:
    @pytest.mark.parametrize("raw,expected", [
        (0.86, 0.9),
        (0.85, 0.9),   # half rounds up
        (0.84, 0.8),
        (0.05, 0.1),
        (0.04, 0.0),
        (1.7, 1.0),    # clamp above
        (-0.3, 0.0),   # clamp below
        (1.0, 1.0),
        (0.0, 0.0),
    ])
    def test_round_half_up_and_clamp(self, raw, expected):
        assert quantize_score(raw) == pytest.approx(expected)

    @given(st.floats(min_value=-2, max_value=3, allow_nan=False))
    @settings(max_examples=300, deadline=None)
    def test_every_output_is_a_tenth_in_unit_interval(self, raw):
        score = quantize_score(raw)
        assert 0.0 <= score <= 1.0
        assert abs(score * 10 - round(score * 10)) < 1e-9

    def test_thousand_random_judge_outputs_quantize(self):
        rng = random.Random(5)
        for _ in range(1000):
            score = quantize_score(rng.uniform(-1, 2))
            assert 0.0 <= score <= 1.0
            assert abs(score * 10 - round(score * 10)) < 1e-9


class TestJudgeReplies:
    def test_parse_plain_number(self):
        assert parse_judge_reply("0.8") == 0.8

    def test_parse_number_in_prose(self):
        assert parse_judge_reply("I would give this a 0.7 overall.") == 0.7

    def test_unparseable_raises(self):
        from cepmas.errors import JudgeUnparseable

        with pytest.raises(JudgeUnparseable):
            parse_judge_reply("no idea")


class TestScoreDescription:
    def test_one_request_per_criterion_with_anchors(self):
        judge = SequenceJudge(["0.8", "0.7", "0.9", "0.8", "1.0"])
        card = score_description("ref", "cand", COMPLEXITY_LEVELS[1], judge)
        assert len(judge.requests) == 5
        for request in judge.requests:
            prompt = request.transcript_tail[-1]["content"]
            assert "excellently" in prompt
            assert "minor issues" in prompt
            assert "noticeable issues" in prompt
            assert "more significant issues" in prompt
        assert card.scores[Criterion.CORRECTNESS] == 0.8
        assert card.scores[Criterion.CONSISTENCY] == 1.0
        assert not card.incomplete

    def test_scores_quantized(self):
        judge = SequenceJudge(["0.86", "0.11", "0.99", "0.55", "0.44"])
        card = score_description("ref", "cand", 2, judge)
        assert card.scores[Criterion.CORRECTNESS] == 0.9
        assert card.scores[Criterion.DETAIL] == 0.1
        assert card.scores[Criterion.CONTEXT] == 1.0
        assert card.scores[Criterion.TEMPORAL] == 0.6
        assert card.scores[Criterion.CONSISTENCY] == 0.4

    def test_unparseable_reply_retried_once_then_unscored(self):
        judge = SequenceJudge(["garbage", "0.8",          # retry succeeds
                               "junk", "still junk",      # retry fails
                               "0.9", "1.0", "0.7"])
        card = score_description("ref", "cand", 3, judge)
        assert card.scores[Criterion.CORRECTNESS] == 0.8
        assert Criterion.DETAIL not in card.scores
        assert card.incomplete

    def test_identical_inputs_identical_cards(self):
        def run():
            judge = ScriptedBackend(table3_judge_script())
            return score_description(
                reference_description(COMPLEXITY_LEVELS[3]), "cand",
                COMPLEXITY_LEVELS[3], judge,
            ).scores

        assert run() == run()

    def test_echo_judge_full_marks_for_self_comparison(self):
        # Judge convention: identical texts score 1.0 on every criterion.
        class EchoJudge:
            def complete(self, request):
                prompt = request.transcript_tail[-1]["content"]
                _, _, tail = prompt.partition("Reference description:\n")
                reference, _, candidate = tail.partition("\nCandidate description:\n")
                return GatewayResponse(
                    content="1.0" if reference == candidate else "0.5"
                )

        text = reference_description(COMPLEXITY_LEVELS[1])
        card = score_description(text, text, 1, EchoJudge())
        assert all(card.scores[c] == 1.0 for c in CRITERIA)


class TestAggregation:
    def test_fixture_reproduces_reference_matrix(self):
        matrix = aggregate_scorecards(load_table3_fixture())
        assert matrix.row(Criterion.CORRECTNESS) == [0.8, 0.8, 0.9, 0.7, 0.6]
        assert matrix.row(Criterion.DETAIL) == [0.7, 0.7, 0.8, 0.6, 0.5]
        assert matrix.row(Criterion.CONTEXT) == [0.9, 0.9, 0.9, 0.8, 0.7]
        assert matrix.row(Criterion.TEMPORAL) == [0.8, 0.8, 1.0, 0.7, 0.6]
        assert matrix.row(Criterion.CONSISTENCY) == [1.0, 1.0, 1.0, 1.0, 0.9]

    def test_consistency_minimum_attained_only_at_level_five(self):
        matrix = aggregate_scorecards(load_table3_fixture())
        row = matrix.row(Criterion.CONSISTENCY)
        assert min(row) == 0.9
        assert row.index(min(row)) == 4
        assert all(v == 1.0 for v in row[:4])

    def test_permutation_invariance(self):
        cards = load_table3_fixture()
        shuffled = list(cards)
        random.Random(0).shuffle(shuffled)
        lhs = aggregate_scorecards(cards)
        rhs = aggregate_scorecards(shuffled)
        assert lhs.means == rhs.means

    def test_missing_level_rejected(self):
        cards = [c for c in load_table3_fixture() if c.level != 3]
        with pytest.raises(MissingLevel):
            aggregate_scorecards(cards)

    def test_all_ones_matrix(self):
        cards = [
            EvalScorecard(level=lv, resolution="1080p",
                          scores={c: 1.0 for c in CRITERIA})
            for lv in range(1, 6)
        ]
        matrix = aggregate_scorecards(cards)
        assert all(v == 1.0 for c in CRITERIA for v in matrix.row(c))
        assert all(matrix.deltas[c] == 0.0 for c in CRITERIA)

    def test_deltas_track_level1_to_level5(self):
        matrix = aggregate_scorecards(load_table3_fixture())
        assert matrix.deltas[Criterion.CORRECTNESS] == pytest.approx(-0.2)
        assert matrix.deltas[Criterion.CONSISTENCY] == pytest.approx(-0.1)


class TestScorecardCsv:
    def test_round_trip(self):
        cards = load_table3_fixture()
        text = scorecards_to_csv(cards)
        loaded = scorecards_from_csv(text)
        assert [c.scores for c in loaded] == [c.scores for c in cards]
        assert text.splitlines()[0] == (
            "level,resolution,correctness,detail,context,temporal,consistency,"
            "judge_id"
        )


class TestJudgePromptShape:
    def test_prompt_carries_rubric_reference_and_candidate(self):
        prompt = judge_prompt(Criterion.TEMPORAL, "REF-TEXT", "CAND-TEXT")
        assert "TemporalUnderstanding" in prompt
        assert "REF-TEXT" in prompt
        assert "CAND-TEXT" in prompt
