"""Description-quality evaluation: five criteria, 0-1 scores in 0.1 steps.

A judge gateway is asked once per criterion (criteria stay independently
retryable); replies are quantized round-half-up to the nearest 0.1 and
clamped to [0, 1].  Aggregation produces the criterion x complexity-level
matrix and per-criterion level-1 to level-5 deltas.
"""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from enum import Enum

from .errors import JudgeUnparseable, MissingLevel
from .frames import COMPLEXITY_LEVELS, ComplexityLevel
from .gateway import Gateway, GatewayRequest, PURPOSE_JUDGE


class Criterion(str, Enum):
    CORRECTNESS = "CorrectnessOfInformation"
    DETAIL = "DetailedOrientation"
    CONTEXT = "ContextualUnderstanding"
    TEMPORAL = "TemporalUnderstanding"
    CONSISTENCY = "Consistency"


CRITERIA: tuple[Criterion, ...] = (
    Criterion.CORRECTNESS,
    Criterion.DETAIL,
    Criterion.CONTEXT,
    Criterion.TEMPORAL,
    Criterion.CONSISTENCY,
)

RUBRICS: dict[Criterion, str] = {
    Criterion.CORRECTNESS: (
        "Do the facts in the candidate description match what the reference "
        "says actually happens, without invented events or objects?"
    ),
    Criterion.DETAIL: (
        "Does the candidate cover the specific objects, actions and settings "
        "at a level of granularity comparable to the reference?"
    ),
    Criterion.CONTEXT: (
        "Does the candidate place the elements of the scene in the right "
        "overall setting and relate them to each other correctly?"
    ),
    Criterion.TEMPORAL: (
        "Does the candidate narrate the order and progression of events over "
        "time the way the reference does?"
    ),
    Criterion.CONSISTENCY: (
        "Does the candidate keep a steady level of accuracy and coherence "
        "from start to finish, without contradicting itself?"
    ),
}

# Anchor wording is part of the judging contract and appears in every prompt.
SCORE_ANCHORS = (
    "Scoring anchors: 1.0 means the description meets the criterion "
    "excellently, with no significant issues; 0.9 means it meets the "
    "criterion well but has minor issues; 0.8 means it meets the criterion "
    "satisfactorily but with some noticeable issues; 0.7 or lower indicates "
    "more significant issues in meeting the criterion."
)


def quantize_score(value: float) -> float:
    """Clamp to [0, 1] and round half-up to the nearest multiple of 0.1."""
    clamped = min(1.0, max(0.0, value))
    quantized = Decimal(repr(clamped)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    return float(quantized)


_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")


def parse_judge_reply(reply: str) -> float:
    match = _NUMBER_RE.search(reply)
    if match is None:
        raise JudgeUnparseable(f"no numeric score in judge reply: {reply!r}")
    return float(match.group(0))


@dataclass
class EvalScorecard:
    level: int
    resolution: str
    scores: dict[Criterion, float] = field(default_factory=dict)
    judge_id: str = ""
    reference: str = ""
    candidate: str = ""
    incomplete: bool = False

    def as_row(self) -> dict[str, object]:
        return {
            "level": self.level,
            "resolution": self.resolution,
            "correctness": self.scores.get(Criterion.CORRECTNESS, ""),
            "detail": self.scores.get(Criterion.DETAIL, ""),
            "context": self.scores.get(Criterion.CONTEXT, ""),
            "temporal": self.scores.get(Criterion.TEMPORAL, ""),
            "consistency": self.scores.get(Criterion.CONSISTENCY, ""),
            "judge_id": self.judge_id,
        }


SCORECARD_CSV_HEADER = [
    "level", "resolution", "correctness", "detail", "context", "temporal",
    "consistency", "judge_id",
]


def judge_prompt(criterion: Criterion, reference: str, candidate: str) -> str:
    return (
        f"You are judging one criterion of a video description: {criterion.value}. "
        f"{RUBRICS[criterion]} {SCORE_ANCHORS} "
        "Reply with a single number between 0 and 1.\n"
        f"Reference description:\n{reference}\n"
        f"Candidate description:\n{candidate}"
    )


def score_description(
    reference: str,
    candidate: str,
    level: ComplexityLevel | int,
    judge: Gateway,
    resolution: str = "1080p",
    judge_id: str = "scripted-judge",
) -> EvalScorecard:
    """One judge request per criterion; unparseable replies get one retry."""
    level_no = level.level if isinstance(level, ComplexityLevel) else int(level)
    card = EvalScorecard(
        level=level_no,
        resolution=resolution,
        judge_id=judge_id,
        reference=reference,
        candidate=candidate,
    )
    for criterion in CRITERIA:
        prompt = judge_prompt(criterion, reference, candidate)
        request = GatewayRequest(
            purpose=PURPOSE_JUDGE,
            transcript_tail=[{"sender": "judge", "content": prompt}],
        )
        score: float | None = None
        for _ in range(2):
            reply = judge.complete(request).content
            try:
                score = parse_judge_reply(reply)
                break
            except JudgeUnparseable:
                continue
        if score is None:
            card.incomplete = True
            continue
        card.scores[criterion] = quantize_score(score)
    return card


@dataclass
class EvalMatrix:
    means: dict[Criterion, dict[int, float]]  # criterion -> level -> mean
    deltas: dict[Criterion, float]  # level-5 mean minus level-1 mean
    levels: list[int]

    def row(self, criterion: Criterion) -> list[float]:
        return [self.means[criterion][level] for level in self.levels]


def aggregate_scorecards(cards: list[EvalScorecard]) -> EvalMatrix:
    """Criterion x level mean matrix; permutation-invariant in the input."""
    levels = sorted(COMPLEXITY_LEVELS)
    present = {c.level for c in cards}
    missing = [lv for lv in levels if lv not in present]
    if missing:
        raise MissingLevel(f"no scorecards for level(s) {missing}")
    means: dict[Criterion, dict[int, float]] = {c: {} for c in CRITERIA}
    for criterion in CRITERIA:
        for level in levels:
            values = [
                card.scores[criterion]
                for card in cards
                if card.level == level and criterion in card.scores
            ]
            if not values:
                raise MissingLevel(
                    f"level {level} has no {criterion.value} scores"
                )
            means[criterion][level] = sum(values) / len(values)
    deltas = {
        criterion: means[criterion][levels[-1]] - means[criterion][levels[0]]
        for criterion in CRITERIA
    }
    return EvalMatrix(means=means, deltas=deltas, levels=levels)


def scorecards_to_csv(cards: list[EvalScorecard]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(SCORECARD_CSV_HEADER)
    for card in cards:
        row = card.as_row()
        writer.writerow([row[col] for col in SCORECARD_CSV_HEADER])
    return out.getvalue()


def scorecards_from_csv(text: str) -> list[EvalScorecard]:
    reader = csv.DictReader(io.StringIO(text))
    cards = []
    for record in reader:
        card = EvalScorecard(
            level=int(record["level"]),
            resolution=record["resolution"],
            judge_id=record.get("judge_id", ""),
        )
        for criterion, column in (
            (Criterion.CORRECTNESS, "correctness"),
            (Criterion.DETAIL, "detail"),
            (Criterion.CONTEXT, "context"),
            (Criterion.TEMPORAL, "temporal"),
            (Criterion.CONSISTENCY, "consistency"),
        ):
            raw = record.get(column, "")
            if raw != "":
                card.scores[criterion] = float(raw)
        cards.append(card)
    return cards
