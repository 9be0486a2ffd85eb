"""User-facing query service: sessions, subscriptions and the HTTP API.

Synchronous queries run one conversation per call; asynchronous
subscriptions re-run the same pipeline on a frame cadence and buffer
positive matches for destructive fetching.  Every behavior is reachable
through the HTTP + event-stream interface the console consumes.
"""
from __future__ import annotations

import itertools
import json
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .agents import (
    ConversationRuntime,
    ConversationState,
    Topology,
    TerminationReason,
    UNEXPECTED_ERROR_MESSAGE,
    export_transcript,
)
from .broker import Broker
from .clocks import Clock, MonotonicClock
from .errors import (
    PipelineError,
    UnknownSession,
    UnknownSubscription,
    UnknownTopic,
)
from .flows import build_topology
from .frames import decode_scene
from .gateway import Gateway
from .metrics import LatencyReport, SpanCollector, aggregate_experiment
from .toolbox import ToolRegistry

DEFAULT_CADENCE_FRAMES = 48
DEFAULT_CAPACITY = 16

RelevanceCheck = Callable[[str, str, tuple[int, int]], bool]

_AFFIRMATIVE_MARKERS = ("yes", "there are", "there is")


def affirmative_relevance(answer: str, topic: str, span: tuple[int, int]) -> bool:
    """Default yes/no extraction over the pipeline's answer text."""
    lowered = answer.lower()
    return any(marker in lowered for marker in _AFFIRMATIVE_MARKERS)


@dataclass
class MatchEvent:
    subscription_id: str
    answer: str
    topic: str
    seq_span: tuple[int, int]
    report: LatencyReport
    detected_at_ms: float

    def as_dict(self) -> dict[str, Any]:
        return {
            "subscription_id": self.subscription_id,
            "answer": self.answer,
            "topic": self.topic,
            "seq_span": list(self.seq_span),
            "detected_at_ms": self.detected_at_ms,
            "report": self.report.as_row(),
        }


@dataclass
class Subscription:
    id: str
    query: str
    topics: list[str]
    cadence_frames: int
    capacity: int
    topology_label: str
    buffer: deque = field(default_factory=deque)
    drops: int = 0
    watermarks: dict[str, int] = field(default_factory=dict)


@dataclass
class QuerySession:
    id: str
    topology_label: str
    topology: Topology
    created_at: float
    mode: str = "sync"
    state: ConversationState | None = None
    events: list[dict[str, Any]] = field(default_factory=list)
    condition: threading.Condition = field(default_factory=threading.Condition)

    def emit(self, event_type: str, data: dict[str, Any]) -> None:
        with self.condition:
            self.events.append({"event": event_type, "data": data})
            self.condition.notify_all()


class QueryService:
    """Session and subscription manager over one shared pipeline."""

    def __init__(
        self,
        broker: Broker,
        registry: ToolRegistry,
        gateway: Gateway,
        clock: Clock | None = None,
        collector: SpanCollector | None = None,
        relevance: RelevanceCheck = affirmative_relevance,
        default_topology: str = "2-agent",
        topology_resolver: Callable[[str], Topology] = build_topology,
    ):
        self.broker = broker
        self.registry = registry
        self.gateway = gateway
        self.clock = clock or MonotonicClock()
        self.collector = collector if collector is not None else registry.collector
        self.relevance = relevance
        self.default_topology = default_topology
        self.topology_resolver = topology_resolver
        self.sessions: dict[str, QuerySession] = {}
        self.subscriptions: dict[str, Subscription] = {}
        self.reports: list[LatencyReport] = []
        self._ids = itertools.count(1)
        self._lock = threading.RLock()
        self._session_by_conversation: dict[str, QuerySession] = {}
        self._pump_thread: threading.Thread | None = None
        self._stop_pump = threading.Event()
        self.collector.on_record = self._on_span

    # -- sessions ------------------------------------------------------------

    def create_session(self, topology_label: str | None = None,
                       mode: str = "sync") -> QuerySession:
        label = topology_label or self.default_topology
        session = QuerySession(
            id=f"session-{next(self._ids)}",
            topology_label=label,
            topology=self.topology_resolver(label),
            created_at=time.time(),
            mode=mode,
        )
        with self._lock:
            self.sessions[session.id] = session
        return session

    def get_session(self, session_id: str) -> QuerySession:
        session = self.sessions.get(session_id)
        if session is None:
            raise UnknownSession(session_id)
        return session

    def query(self, session_id: str, text: str) -> tuple[str, LatencyReport]:
        """Run one pipeline conversation for the session and record events."""
        session = self.get_session(session_id)
        runtime = ConversationRuntime(
            self.gateway,
            self.registry,
            clock=self.clock,
            collector=self.collector,
            on_message=lambda record: session.emit("message", record),
        )
        conversation_id = f"{session.id}-c{len(self.reports) + 1}"
        with self._lock:
            self._session_by_conversation[conversation_id] = session
        followup_capable = (
            session.state is not None
            and session.topology.reflection is not None
            and session.state.transcript
        )
        if followup_capable:
            answer, state, report = runtime.ask_followup(
                session.state, session.topology, text
            )
        else:
            # Sessions outlive conversations: a fresh one starts when the
            # topology cannot carry a follow-up.
            answer, state, report = runtime.run_conversation(
                session.topology, text, conversation_id=conversation_id
            )
        session.state = state
        report.topology = session.topology_label
        with self._lock:
            self.reports.append(report)
        session.emit("report", report.as_row())
        if state.termination_reason is TerminationReason.UNRECOVERABLE_ERROR:
            raise PipelineError(UNEXPECTED_ERROR_MESSAGE)
        return answer, report

    def transcript(self, session_id: str) -> list[dict[str, Any]]:
        session = self.get_session(session_id)
        if session.state is None:
            return []
        return export_transcript(session.state)

    def _on_span(self, span) -> None:
        session = self._session_by_conversation.get(span.conversation_id)
        if session is not None:
            session.emit(
                "span",
                {
                    "kind": span.kind.value,
                    "start_ms": span.start_ms,
                    "end_ms": span.end_ms,
                    "conversation_id": span.conversation_id,
                },
            )

    # -- subscriptions ----------------------------------------------------------

    def subscribe(
        self,
        query_text: str,
        topics: list[str],
        cadence_frames: int = DEFAULT_CADENCE_FRAMES,
        capacity: int = DEFAULT_CAPACITY,
        topology_label: str | None = None,
    ) -> Subscription:
        for topic in topics:
            if not self.broker.has_topic(topic):
                raise UnknownTopic(topic)
        subscription = Subscription(
            id=f"subscription-{next(self._ids)}",
            query=query_text,
            topics=list(topics),
            cadence_frames=cadence_frames,
            capacity=capacity,
            topology_label=topology_label or self.default_topology,
            # Evaluation covers frames published after the subscription.
            watermarks={
                topic: self.broker.topic_stats(topic)["latest_seq"]
                for topic in topics
            },
        )
        with self._lock:
            self.subscriptions[subscription.id] = subscription
        return subscription

    def unsubscribe(self, subscription_id: str) -> None:
        with self._lock:
            if subscription_id not in self.subscriptions:
                raise UnknownSubscription(subscription_id)
            del self.subscriptions[subscription_id]

    def fetch_matches(self, subscription_id: str, max_events: int) -> list[MatchEvent]:
        subscription = self.subscriptions.get(subscription_id)
        if subscription is None:
            raise UnknownSubscription(subscription_id)
        fetched = []
        with self._lock:
            while subscription.buffer and len(fetched) < max_events:
                fetched.append(subscription.buffer.popleft())
        return fetched

    def pump_subscriptions(self) -> int:
        """Evaluate every due subscription once; returns match count."""
        matches = 0
        for subscription in list(self.subscriptions.values()):
            for topic in subscription.topics:
                latest = self.broker.topic_stats(topic)["latest_seq"]
                watermark = subscription.watermarks.get(topic, -1)
                if latest - watermark < subscription.cadence_frames:
                    continue
                matches += self._evaluate(subscription, topic, watermark + 1, latest)
                subscription.watermarks[topic] = latest
        return matches

    def _evaluate(self, subscription: Subscription, topic: str,
                  first_seq: int, last_seq: int) -> int:
        topology = self.topology_resolver(subscription.topology_label)
        runtime = ConversationRuntime(
            self.gateway, self.registry, clock=self.clock, collector=self.collector
        )
        answer, state, report = runtime.run_conversation(
            topology, subscription.query,
            conversation_id=f"{subscription.id}-e{len(self.reports) + 1}",
        )
        report.topology = subscription.topology_label
        with self._lock:
            self.reports.append(report)
        if not self.relevance(answer, topic, (first_seq, last_seq)):
            return 0
        event = MatchEvent(
            subscription_id=subscription.id,
            answer=answer,
            topic=topic,
            seq_span=(first_seq, last_seq),
            report=report,
            detected_at_ms=self.clock.now_ms(),
        )
        with self._lock:
            subscription.buffer.append(event)
            while len(subscription.buffer) > subscription.capacity:
                subscription.buffer.popleft()
                subscription.drops += 1  # drop-oldest, counted
        return 1

    def start_pumping(self, interval_s: float = 0.5) -> None:
        if self._pump_thread is not None:
            return
        self._stop_pump.clear()

        def pump_loop():
            while not self._stop_pump.wait(interval_s):
                self.pump_subscriptions()

        self._pump_thread = threading.Thread(target=pump_loop, daemon=True)
        self._pump_thread.start()

    def stop_pumping(self) -> None:
        self._stop_pump.set()
        if self._pump_thread is not None:
            self._pump_thread.join(timeout=2)
            self._pump_thread = None

    # -- misc -----------------------------------------------------------------

    def topics(self) -> list[dict[str, Any]]:
        entries = []
        for name in self.broker.list_topics():
            stats = self.broker.topic_stats(name)
            thumbnail = None
            try:
                latest = self.broker.consume_latest(name, window=1)[-1]
                if latest.encoding == "raw-synthetic":
                    thumbnail = decode_scene(latest.payload_bytes(self.broker.frame_store))
            except Exception:  # noqa: BLE001 - thumbnails are best effort
                thumbnail = None
            stats["thumbnail"] = thumbnail
            entries.append(stats)
        return entries

    def metrics_rows(self, group_by: str) -> list[dict[str, Any]]:
        rows = aggregate_experiment(self.reports, group_by)
        return [
            {"group": row.group, "runs": row.runs, "stats": row.stats}
            for row in rows
        ]


# --- HTTP layer ---------------------------------------------------------------

try:  # pydantic request models; fastapi is an install-time dependency
    from pydantic import BaseModel

    class SessionBody(BaseModel):
        topology: str | None = None
        mode: str = "sync"

    class QueryBody(BaseModel):
        text: str

    class SubscriptionBody(BaseModel):
        query: str
        topics: list[str]
        cadence_frames: int = DEFAULT_CADENCE_FRAMES
        capacity: int = DEFAULT_CAPACITY
        topology: str | None = None

    class IngestBody(BaseModel):
        level: int = 3
        frames: int = 24
        resolution: str = "1080p"
        seed: int = 0
        label: str | None = None
except ImportError:  # pragma: no cover
    BaseModel = None


def build_app(service: QueryService, static_dir: Path | None = None):
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import StreamingResponse

    app = FastAPI(title="cepmas query service", version="0.1.0")

    def _http_error(exc: Exception, status: int):
        raise HTTPException(status_code=status, detail=str(exc))

    @app.post("/sessions")
    def create_session(body: SessionBody):
        session = service.create_session(body.topology, mode=body.mode)
        return {"session_id": session.id, "topology": session.topology_label}

    @app.post("/sessions/{session_id}/query")
    def run_query(session_id: str, body: QueryBody):
        try:
            answer, report = service.query(session_id, body.text)
        except UnknownSession as exc:
            _http_error(exc, 404)
        except PipelineError as exc:
            raise HTTPException(status_code=500, detail=str(exc))
        return {"answer": answer, "report": report.as_row()}

    @app.get("/sessions/{session_id}/transcript")
    def get_transcript(session_id: str):
        try:
            return {"messages": service.transcript(session_id)}
        except UnknownSession as exc:
            _http_error(exc, 404)

    @app.get("/sessions/{session_id}/events")
    def stream_events(session_id: str, live: int = 1, timeout_s: float = 30.0):
        try:
            session = service.get_session(session_id)
        except UnknownSession as exc:
            _http_error(exc, 404)

        def generate():
            cursor = 0
            deadline = time.time() + timeout_s
            while True:
                with session.condition:
                    pending = session.events[cursor:]
                events = pending
                for event in events:
                    cursor += 1
                    payload = json.dumps(event["data"], separators=(",", ":"))
                    yield f"event: {event['event']}\ndata: {payload}\n\n"
                if not live:
                    return
                if time.time() >= deadline:
                    yield "event: timeout\ndata: {}\n\n"
                    return
                with session.condition:
                    if len(session.events) == cursor:
                        session.condition.wait(timeout=0.25)

        return StreamingResponse(generate(), media_type="text/event-stream")

    @app.post("/subscriptions")
    def create_subscription(body: SubscriptionBody):
        try:
            subscription = service.subscribe(
                body.query,
                body.topics,
                cadence_frames=body.cadence_frames,
                capacity=body.capacity,
                topology_label=body.topology,
            )
        except UnknownTopic as exc:
            _http_error(exc, 404)
        return {"subscription_id": subscription.id}

    @app.get("/subscriptions/{subscription_id}/matches")
    def get_matches(subscription_id: str, max: int = 10):
        subscription = service.subscriptions.get(subscription_id)
        if subscription is None:
            _http_error(UnknownSubscription(subscription_id), 404)
        events = service.fetch_matches(subscription_id, max)
        return {
            "matches": [event.as_dict() for event in events],
            "drops": subscription.drops,
        }

    @app.delete("/subscriptions/{subscription_id}")
    def remove_subscription(subscription_id: str):
        try:
            service.unsubscribe(subscription_id)
        except UnknownSubscription as exc:
            _http_error(exc, 404)
        return {"ok": True}

    @app.get("/topics")
    def list_topics():
        return {"topics": service.topics()}

    @app.post("/topics/{topic}/ingest")
    def ingest_topic(topic: str, body: IngestBody):
        from .broker import SyntheticSource
        from .frames import RESOLUTIONS, SyntheticCorpusSpec

        if body.resolution not in RESOLUTIONS:
            raise HTTPException(status_code=400,
                                detail=f"unknown resolution {body.resolution!r}")
        width, height = RESOLUTIONS[body.resolution]
        if not service.broker.has_topic(topic):
            try:
                service.broker.create_topic(topic)
            except Exception as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        summary = service.broker.ingest_stream(
            topic,
            SyntheticSource(SyntheticCorpusSpec(
                level=body.level, frame_count=body.frames, width=width,
                height=height, seed=body.seed, label=body.label,
            )),
        )
        return {"topic": summary.topic, "frame_count": summary.frame_count,
                "duration_ms": summary.duration_ms, "label": summary.label}

    @app.get("/metrics/reports")
    def metrics(group_by: str = "topology"):
        try:
            return {"rows": service.metrics_rows(group_by)}
        except Exception as exc:  # EmptyGroup or bad group_by
            raise HTTPException(status_code=400, detail=str(exc))

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")

    return app
