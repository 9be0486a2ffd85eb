"""Speaker selection: the four stock strategies plus the keyword FSM.

``next_speaker`` is a total function over every reachable conversation
state: whatever the transcript looks like, it returns some agent, so the
turn loop can never wedge on selection.
"""
from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .errors import PolicyMisconfigured
from .gateway import Gateway, GatewayRequest, PURPOSE_SPEAKER

RECHECK = "RECHECK"
QUERY = "QUERY"
HANDOFF = "HANDOFF"

USER_PROXY = "UserProxy"
REFLECTION = "Reflection"
ENGINEER_1 = "Engineer-1"
ENGINEER_2 = "Engineer-2"


class PolicyKind(str, Enum):
    AUTO = "auto"
    MANUAL = "manual"
    ROUND_ROBIN = "round-robin"
    RANDOM = "random"
    KEYWORD_FSM = "keyword-fsm"


@dataclass(frozen=True)
class KeywordRule:
    """On a whole-token keyword in ``from_agent``'s last message, hand the
    floor to ``next_agent``.  Earlier rules win when several keywords appear."""

    keyword: str
    from_agent: str
    next_agent: str

    def __post_init__(self):
        if not self.keyword or not self.keyword.isupper():
            raise ValueError(f"keyword must be a non-empty uppercase token: {self.keyword!r}")


@dataclass
class SpeakerPolicy:
    kind: PolicyKind
    seed: int = 0
    rules: list[KeywordRule] = field(default_factory=list)
    default_edges: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        keywords = [(r.from_agent, r.keyword) for r in self.rules]
        if len(keywords) != len(set(keywords)):
            raise ValueError("keyword rules must be distinct per from-agent")


def round_robin_policy() -> SpeakerPolicy:
    return SpeakerPolicy(kind=PolicyKind.ROUND_ROBIN)


def random_policy(seed: int) -> SpeakerPolicy:
    return SpeakerPolicy(kind=PolicyKind.RANDOM, seed=seed)


def canonical_four_agent_rules() -> SpeakerPolicy:
    """The fixed four-agent graph.

    Reflection routes on RECHECK/QUERY (RECHECK wins when both appear) and
    otherwise returns to the user proxy; Engineer-1 always hands to
    Engineer-2, Engineer-2 always reports back to Reflection, and the user
    proxy always defers to Reflection.
    """
    return SpeakerPolicy(
        kind=PolicyKind.KEYWORD_FSM,
        rules=[
            KeywordRule(RECHECK, REFLECTION, ENGINEER_1),
            KeywordRule(QUERY, REFLECTION, ENGINEER_2),
        ],
        default_edges={
            REFLECTION: USER_PROXY,
            ENGINEER_1: ENGINEER_2,
            ENGINEER_2: REFLECTION,
            USER_PROXY: REFLECTION,
        },
    )


def canonical_three_agent_rules(user_proxy: str = "Admin",
                                engineer: str = "Engineer",
                                reflection: str = "Reflection") -> SpeakerPolicy:
    """Three-agent graph: the single engineer keeps the floor through its
    toolchain and yields with HANDOFF; Reflection routes RECHECK/QUERY back
    to it."""
    return SpeakerPolicy(
        kind=PolicyKind.KEYWORD_FSM,
        rules=[
            KeywordRule(RECHECK, reflection, engineer),
            KeywordRule(QUERY, reflection, engineer),
            KeywordRule(HANDOFF, engineer, reflection),
        ],
        default_edges={
            reflection: user_proxy,
            engineer: engineer,
            user_proxy: reflection,
        },
    )


def _contains_token(content: str, keyword: str) -> bool:
    return re.search(rf"(?<![A-Za-z0-9_]){re.escape(keyword)}(?![A-Za-z0-9_])", content) is not None


def _last_content_by(transcript: Sequence[dict], sender: str) -> str:
    # Keywords come from the agent's current utterance: its most recent
    # message of any kind.  A tool-call suggestion has empty content, so it
    # never re-triggers a keyword spoken earlier in the conversation.
    for message in reversed(transcript):
        if message.get("sender") == sender:
            return str(message.get("content") or "")
    return ""


def fsm_next(policy: SpeakerPolicy, from_agent: str, content: str,
             agents: Sequence[str]) -> str:
    for rule in policy.rules:
        if rule.from_agent == from_agent and _contains_token(content, rule.keyword):
            return rule.next_agent
    if from_agent in policy.default_edges:
        return policy.default_edges[from_agent]
    # Unknown state: fall back to cyclic order so selection stays total.
    if from_agent in agents:
        return agents[(agents.index(from_agent) + 1) % len(agents)]
    return agents[0]


Chooser = Callable[[Sequence[str], Sequence[dict]], str]


def next_speaker(
    policy: SpeakerPolicy,
    *,
    agents: Sequence[str],
    current_speaker: str,
    rounds: int,
    transcript: Sequence[dict],
    start_index: int = 0,
    gateway: Gateway | None = None,
    chooser: Chooser | None = None,
    rng: random.Random | None = None,
    descriptions: Sequence[str] | None = None,
) -> str:
    """Pick the next speaker under the given policy."""
    if len(agents) < 2:
        raise PolicyMisconfigured("speaker selection needs at least two agents")

    if policy.kind is PolicyKind.ROUND_ROBIN:
        return agents[(start_index + rounds) % len(agents)]

    if policy.kind is PolicyKind.RANDOM:
        if rng is None:
            rng = random.Random(policy.seed)
        candidates = [a for a in agents if a != current_speaker]
        return candidates[rng.randrange(len(candidates))]

    if policy.kind is PolicyKind.MANUAL:
        if chooser is None:
            raise PolicyMisconfigured("manual policy needs an interactive chooser")
        return chooser(agents, transcript)

    if policy.kind is PolicyKind.AUTO:
        if gateway is None:
            raise PolicyMisconfigured("auto policy needs a model gateway")
        return _auto_select(agents, rounds, transcript, start_index, gateway,
                            descriptions)

    if policy.kind is PolicyKind.KEYWORD_FSM:
        content = _last_content_by(transcript, current_speaker)
        return fsm_next(policy, current_speaker, content, agents)

    raise PolicyMisconfigured(f"unknown policy kind {policy.kind!r}")


def _auto_select(agents, rounds, transcript, start_index, gateway: Gateway,
                 descriptions) -> str:
    tail = list(transcript[-4:])
    roster = descriptions if descriptions else agents
    prompt = (
        "Choose the next speaker from this list and answer with exactly one "
        "name.\n" + "\n".join(roster)
    )
    request = GatewayRequest(
        purpose=PURPOSE_SPEAKER,
        transcript_tail=tail + [{"sender": "system", "content": prompt}],
    )
    reply = gateway.complete(request).content.strip()
    for agent in agents:
        if reply == agent:
            return agent
    # Unparseable pick: fall back to round-robin for this turn.
    return agents[(start_index + rounds) % len(agents)]
