"""Conversable-agent runtime: roles, group transcript, turn loop, termination.

One conversation is a deterministic state machine around a pluggable model
gateway: the speaker policy picks the next agent, model-backed turns go
through the gateway, suggested tool calls are executed by the toolbox and
relayed back through the user proxy, and the loop ends on the TERMINATE
keyword, the round budget, or an unrecoverable tool error.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from .clocks import Clock, MonotonicClock
from .errors import (
    ConversationTerminated,
    TopologyError,
    TopologyTooSmall,
)
from .gateway import (
    Gateway,
    GatewayRequest,
    GatewayResponse,
    PURPOSE_TURN,
    TERMINATE,
    ToolCallSpec,
)
from .metrics import LatencySpan, SpanCollector, SpanKind, LatencyReport, finalize_report
from .speakers import SpeakerPolicy, next_speaker
from .toolbox import ToolRegistry

AUTO_REPLY = "Please continue."
UNEXPECTED_ERROR_MESSAGE = "An unexpected error has taken place."

# After the first error ToolResult the flow is redirected for one retry;
# a second error ends the conversation.
MAX_TOOL_ERRORS = 2

TAIL_LENGTH = 8


class RoleKind(str, Enum):
    USER_PROXY = "UserProxy"
    REFLECTION = "Reflection"
    ENGINEER = "Engineer"


@dataclass(frozen=True)
class AgentRole:
    name: str
    kind: RoleKind
    tool_names: frozenset[str] = frozenset()
    system_prompt: str = ""

    def __post_init__(self):
        if self.kind is RoleKind.USER_PROXY and self.tool_names:
            raise TopologyError("the user proxy carries no tools")
        if self.kind is RoleKind.ENGINEER and not self.tool_names:
            raise TopologyError(f"engineer {self.name!r} needs at least one tool")


@dataclass
class Topology:
    label: str
    agents: list[AgentRole]
    policy: SpeakerPolicy
    max_rounds: int = 20

    def __post_init__(self):
        if len(self.agents) < 2:
            raise TopologyError("a topology needs at least two agents")
        proxies = [a for a in self.agents if a.kind is RoleKind.USER_PROXY]
        if len(proxies) != 1:
            raise TopologyError("a topology needs exactly one user proxy")
        names = [a.name for a in self.agents]
        if len(names) != len(set(names)):
            raise TopologyError("agent names must be unique")
        if self.max_rounds < 1:
            raise TopologyError("max_rounds must be positive")

    @property
    def user_proxy(self) -> AgentRole:
        return next(a for a in self.agents if a.kind is RoleKind.USER_PROXY)

    @property
    def reflection(self) -> AgentRole | None:
        return next((a for a in self.agents if a.kind is RoleKind.REFLECTION), None)

    def agent(self, name: str) -> AgentRole:
        for candidate in self.agents:
            if candidate.name == name:
                return candidate
        raise TopologyError(f"no agent named {name!r}")

    def names(self) -> list[str]:
        return [a.name for a in self.agents]


class TerminationReason(str, Enum):
    TERMINATE_KEYWORD = "TerminateKeyword"
    MAX_ROUNDS = "MaxRounds"
    UNRECOVERABLE_ERROR = "UnrecoverableError"


@dataclass
class ToolResponseRecord:
    call_id: str
    value: str
    is_error: bool = False


@dataclass
class ChatMessage:
    round: int
    sender: str
    content: str = ""
    tool_calls: list[ToolCallSpec] = field(default_factory=list)
    tool_response: ToolResponseRecord | None = None

    def __post_init__(self):
        if not self.content and not self.tool_calls and self.tool_response is None:
            raise ValueError("a message needs content, tool calls or a tool response")

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {"round": self.round, "sender": self.sender}
        if self.content:
            record["content"] = self.content
        if self.tool_calls:
            record["tool_calls"] = [
                {"id": c.id, "name": c.name, "args": c.args} for c in self.tool_calls
            ]
        if self.tool_response is not None:
            record["tool_response"] = {
                "call_id": self.tool_response.call_id,
                "value": self.tool_response.value,
                "is_error": self.tool_response.is_error,
            }
        return record


@dataclass
class ConversationState:
    id: str
    transcript: list[ChatMessage] = field(default_factory=list)
    current_speaker: str = ""
    rounds: int = 0
    shared_context: dict[str, str] = field(default_factory=dict)
    terminated: bool = False
    termination_reason: TerminationReason | None = None
    round_budget: int = 20
    tool_errors: int = 0
    next_call_id: int = 1

    def tail_records(self, limit: int = TAIL_LENGTH) -> list[dict[str, Any]]:
        return [m.to_record() for m in self.transcript[-limit:]]


def record_context(state: ConversationState, key: str, value: str) -> ConversationState:
    """Store a value visible to all agents on later turns."""
    if state.terminated:
        raise ConversationTerminated(state.id)
    state.shared_context[key] = value
    return state


def strip_terminate(text: str) -> str:
    trimmed = text.rstrip()
    if trimmed.endswith(TERMINATE):
        trimmed = trimmed[: -len(TERMINATE)].rstrip()
    return trimmed


def ends_with_terminate(text: str) -> bool:
    return text.rstrip().endswith(TERMINATE)


def final_answer(state: ConversationState) -> str:
    """Human-readable answer: the last informative message, keyword stripped.

    Tool-call suggestions are skipped; a bare TERMINATE is not an answer, so
    the relay carrying the model description can satisfy the search.
    """
    for message in reversed(state.transcript):
        if message.tool_calls:
            continue
        if message.content:
            stripped = strip_terminate(message.content)
            if stripped:
                return stripped
        if message.tool_response is not None and not message.tool_response.is_error:
            stripped = strip_terminate(message.tool_response.value)
            if stripped:
                return stripped
    return ""


class ConversationRuntime:
    """Drives conversations over a gateway, registry, clock and span sink."""

    def __init__(
        self,
        gateway: Gateway,
        registry: ToolRegistry,
        clock: Clock | None = None,
        collector: SpanCollector | None = None,
        input_provider: Callable[[str], str] | None = None,
        chooser: Callable | None = None,
        on_message: Callable[[dict[str, Any]], None] | None = None,
    ):
        self.gateway = gateway
        self.registry = registry
        self.clock = clock or MonotonicClock()
        self.collector = collector if collector is not None else registry.collector
        self.input_provider = input_provider
        self.chooser = chooser
        self.on_message = on_message
        self._ids = itertools.count(1)

    # -- public API -----------------------------------------------------------

    def run_conversation(
        self,
        topology: Topology,
        user_query: str,
        conversation_id: str | None = None,
    ) -> tuple[str, ConversationState, LatencyReport]:
        state = ConversationState(
            id=conversation_id or f"conv-{next(self._ids)}",
            round_budget=topology.max_rounds,
        )
        state.current_speaker = topology.user_proxy.name
        window_start = self.clock.now_ms()
        self._append(
            state,
            ChatMessage(round=0, sender=topology.user_proxy.name, content=user_query),
        )
        self._loop(topology, state)
        report = self._report(topology, state, window_start)
        return final_answer(state), state, report

    def ask_followup(
        self,
        state: ConversationState,
        topology: Topology,
        followup: str,
    ) -> tuple[str, ConversationState, LatencyReport]:
        """Continue a conversation with a new user prompt.

        Needs a Reflection agent: a bare engineer can execute calls but cannot
        carry a dialogue past the first prompt.
        """
        if topology.reflection is None:
            raise TopologyTooSmall(
                f"topology {topology.label!r} cannot take follow-ups"
            )
        if state.terminated:
            # Resumable by construction once a Reflection agent is present.
            state.terminated = False
            state.termination_reason = None
        state.round_budget = state.rounds + topology.max_rounds
        window_start = self.clock.now_ms()
        proxy = topology.user_proxy.name
        state.current_speaker = proxy
        self._append(state, ChatMessage(round=state.rounds, sender=proxy, content=followup))
        if not state.terminated:
            self._loop(topology, state)
        report = self._report(topology, state, window_start)
        return final_answer(state), state, report

    # -- turn loop ---------------------------------------------------------------

    def _loop(self, topology: Topology, state: ConversationState) -> None:
        forced_next: str | None = None
        rng = random.Random(topology.policy.seed)
        proxy_name = topology.user_proxy.name
        while not state.terminated:
            if state.rounds >= state.round_budget:
                self._terminate(state, TerminationReason.MAX_ROUNDS)
                break
            speaker = forced_next or self._select(topology, state, rng)
            forced_next = None
            agent = topology.agent(speaker)
            if agent.kind is RoleKind.USER_PROXY:
                self._user_proxy_turn(state, agent)
                continue
            forced_next = self._model_turn(topology, state, agent, proxy_name)

    def _select(self, topology: Topology, state: ConversationState,
                rng: random.Random) -> str:
        start = self.clock.now_ms()
        speaker = next_speaker(
            topology.policy,
            agents=topology.names(),
            current_speaker=state.current_speaker,
            rounds=state.rounds,
            transcript=[m.to_record() for m in state.transcript],
            start_index=topology.names().index(topology.user_proxy.name),
            gateway=self.gateway,
            chooser=self.chooser,
            rng=rng,
            descriptions=[
                f"{a.name} ({a.kind.value}): {a.system_prompt}".rstrip(": ")
                for a in topology.agents
            ],
        )
        self.collector.record(
            LatencySpan(
                kind=SpanKind.SPEAKER_SELECT,
                start_ms=start,
                end_ms=self.clock.now_ms(),
                conversation_id=state.id,
            )
        )
        return speaker

    def _user_proxy_turn(self, state: ConversationState, agent: AgentRole) -> None:
        if self.input_provider is not None:
            content = self.input_provider(final_answer(state))
        else:
            content = AUTO_REPLY
        self._speak(state, agent.name, ChatMessage(round=state.rounds,
                                                   sender=agent.name, content=content))

    def _model_turn(self, topology: Topology, state: ConversationState,
                    agent: AgentRole, proxy_name: str) -> str | None:
        """One gateway-backed turn; returns a forced next speaker, if any."""
        request = GatewayRequest(
            purpose=PURPOSE_TURN,
            transcript_tail=state.tail_records(),
            available_tools=[s.as_dict() for s in self.registry.specs(set(agent.tool_names))],
        )
        turn_start = self.clock.now_ms()
        response = self.gateway.complete(request)
        self.collector.record(
            LatencySpan(
                kind=SpanKind.AGENT_TURN,
                start_ms=turn_start,
                end_ms=self.clock.now_ms(),
                conversation_id=state.id,
            )
        )
        if response.tool_calls:
            return self._tool_turn(topology, state, agent, proxy_name, response)
        content = response.content or AUTO_REPLY
        self._speak(state, agent.name,
                    ChatMessage(round=state.rounds, sender=agent.name, content=content))
        return None

    def _tool_turn(self, topology: Topology, state: ConversationState,
                   agent: AgentRole, proxy_name: str,
                   response: GatewayResponse) -> str | None:
        calls = []
        for call in response.tool_calls:
            calls.append(ToolCallSpec(name=call.name, args=dict(call.args),
                                      id=f"call_{state.next_call_id + len(calls)}"))
        state.next_call_id += len(calls)
        suggestion = ChatMessage(
            round=state.rounds,
            sender=agent.name,
            content=response.content,
            tool_calls=calls,
        )
        self._speak(state, agent.name, suggestion)
        if state.terminated:
            return None
        for call in calls:
            result = self._execute(state, agent, call)
            relay = ChatMessage(
                round=state.rounds,
                sender=proxy_name,
                tool_response=ToolResponseRecord(
                    call_id=call.id, value=result.value, is_error=result.is_error
                ),
            )
            if not self._append(state, relay):
                return None
            if not result.is_error and call.name == "call_model":
                state.shared_context["last_analysis"] = result.value
            if result.is_error:
                return self._redirect_after_error(topology, state, proxy_name)
        return None

    def _execute(self, state: ConversationState, agent: AgentRole, call: ToolCallSpec):
        from .toolbox import ToolResult

        # Registered tools outside the agent's set stay off limits; unknown
        # names fall through to the registry's does-not-exist result.
        if call.name not in agent.tool_names and self.registry.has(call.name):
            return ToolResult(
                call_id=call.id,
                value=f"tool '{call.name}' is not available to agent '{agent.name}'",
                is_error=True,
            )
        return self.registry.dispatch(call, conversation_id=state.id)

    def _redirect_after_error(self, topology: Topology, state: ConversationState,
                              proxy_name: str) -> str | None:
        state.tool_errors += 1
        reflection = topology.reflection
        if reflection is not None and state.tool_errors < MAX_TOOL_ERRORS:
            return reflection.name
        self._append(
            state,
            ChatMessage(round=state.rounds, sender=proxy_name,
                        content=UNEXPECTED_ERROR_MESSAGE),
        )
        self._terminate(state, TerminationReason.UNRECOVERABLE_ERROR)
        return None

    # -- bookkeeping -----------------------------------------------------------

    def _speak(self, state: ConversationState, speaker: str, message: ChatMessage) -> None:
        """Append a policy-selected turn and apply termination rules."""
        state.current_speaker = speaker
        appended = self._append(state, message)
        if appended and message.content and ends_with_terminate(message.content):
            self._terminate(state, TerminationReason.TERMINATE_KEYWORD)

    def _append(self, state: ConversationState, message: ChatMessage) -> bool:
        """Append one message inside the round budget.

        Returns False when the budget is exhausted; the message is dropped and
        the conversation ends with MaxRounds, keeping rounds <= max_rounds.
        """
        if state.terminated:
            raise ConversationTerminated(state.id)
        if state.rounds >= state.round_budget:
            self._terminate(state, TerminationReason.MAX_ROUNDS)
            return False
        message.round = state.rounds
        state.transcript.append(message)
        state.rounds += 1
        if self.on_message is not None:
            self.on_message(message.to_record())
        return True

    def _terminate(self, state: ConversationState, reason: TerminationReason) -> None:
        if state.terminated:
            return
        state.terminated = True
        state.termination_reason = reason

    def _report(self, topology: Topology, state: ConversationState,
                window_start: float) -> LatencyReport:
        window = (window_start, self.clock.now_ms())
        spans = [
            s
            for s in self.collector.spans(state.id)
            if s.start_ms >= window[0] and s.end_ms <= window[1]
        ]
        return finalize_report(
            spans, window, conversation_id=state.id, topology=topology.label
        )


def export_transcript(state: ConversationState) -> list[dict[str, Any]]:
    return [m.to_record() for m in state.transcript]
