from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from cepmas.broker import Broker, SyntheticSource
from cepmas.clocks import VirtualClock
from cepmas.errors import PipelineError, UnknownSubscription, UnknownTopic
from cepmas.flows import (
    DEMO_QUERY,
    DEMO_TOPIC,
    MULTI_CAMERA_QUERY,
    appendix_script,
    demo_corpus_spec,
    multi_camera_script,
)
from cepmas.frames import SyntheticCorpusSpec
from cepmas.gateway import (
    GatewayResponse,
    ScriptStep,
    ScriptedBackend,
    ScriptedBehavior,
    ToolCallSpec,
)
from cepmas.metrics import SpanCollector
from cepmas.service import QueryService, build_app
from cepmas.toolbox import ToolRegistry, Toolbox


def make_service(tmp_path, behavior, topics=(DEMO_TOPIC,), relevance=None,
                 default_topology="2-agent", ingest=True):
    clock = VirtualClock()
    collector = SpanCollector()
    broker = Broker(frame_store=tmp_path / "frames")
    for topic in topics:
        broker.create_topic(topic)
        if ingest:
            label = "Complex_Video" if topic == DEMO_TOPIC else topic
            broker.ingest_stream(
                topic,
                SyntheticSource(SyntheticCorpusSpec(level=3, frame_count=24,
                                                    seed=7, label=label)),
            )
    gateway = ScriptedBackend(behavior, clock=clock)
    registry = ToolRegistry(clock=clock, collector=collector)
    Toolbox(broker=broker, workspace=tmp_path / "ws", gateway=gateway,
            registry=registry)
    kwargs = {"relevance": relevance} if relevance else {}
    return QueryService(
        broker=broker,
        registry=registry,
        gateway=gateway,
        clock=clock,
        collector=collector,
        default_topology=default_topology,
        **kwargs,
    )


class TestSessions:
    def test_appendix_query_returns_highway_description(self, tmp_path):
        service = make_service(tmp_path, appendix_script())
        session = service.create_session("2-agent")
        answer, report = service.query(session.id, DEMO_QUERY)
        assert "busy highway with multiple lanes of traffic" in answer
        assert report.total_duration_ms >= 0

    def test_multi_camera_query_consumes_all_five_topics(self, tmp_path):
        topics = [f"camera-{i}" for i in range(1, 6)]
        service = make_service(tmp_path, multi_camera_script(), topics=topics)
        session = service.create_session("2-agent")
        answer, _ = service.query(session.id, MULTI_CAMERA_QUERY)
        assert answer == "There are red cars present in camera 1 and camera 3."
        transcript = service.transcript(session.id)
        calls = [c for m in transcript for c in m.get("tool_calls", [])]
        assert [c["args"]["topic"] for c in calls] == topics

    def test_second_query_on_two_agent_session_starts_new_conversation(self, tmp_path):
        service = make_service(tmp_path, appendix_script())
        session = service.create_session("2-agent")
        service.query(session.id, DEMO_QUERY)
        first_len = len(service.transcript(session.id))
        service.query(session.id, DEMO_QUERY)
        # Fresh conversation: transcript restarts rather than growing.
        assert len(service.transcript(session.id)) == first_len

    def test_sessions_are_isolated(self, tmp_path):
        service = make_service(tmp_path, appendix_script())
        one = service.create_session("2-agent")
        two = service.create_session("2-agent")
        service.query(one.id, DEMO_QUERY)
        assert service.transcript(two.id) == []
        service.query(two.id, DEMO_QUERY)
        assert service.sessions[one.id].state is not service.sessions[two.id].state
        shared_one = service.sessions[one.id].state.shared_context
        shared_two = service.sessions[two.id].state.shared_context
        assert shared_one is not shared_two

    def test_pipeline_error_surfaces_with_user_phrasing(self, tmp_path):
        behavior = ScriptedBehavior(
            steps=[ScriptStep(
                response=GatewayResponse(
                    tool_calls=[ToolCallSpec(name="reanalyze", args={})]
                ),
                match={"purpose": "turn", "last_contains": DEMO_QUERY},
            )],
            default=GatewayResponse(content="TERMINATE"),
        )
        service = make_service(tmp_path, behavior)
        session = service.create_session("2-agent")
        with pytest.raises(PipelineError) as excinfo:
            service.query(session.id, DEMO_QUERY)
        assert "unexpected error has taken place" in str(excinfo.value).lower()


def window_relevance(lo, hi):
    def check(answer, topic, span):
        return span == (lo, hi)

    return check


class TestSubscriptions:
    def test_match_event_carries_triggering_seq_span(self, tmp_path):
        service = make_service(tmp_path, appendix_script(),
                               relevance=window_relevance(40, 60))
        subscription = service.subscribe("red vehicle", [DEMO_TOPIC],
                                         cadence_frames=16)
        broker = service.broker

        def publish_segment(count, seed):
            broker.ingest_stream(
                DEMO_TOPIC,
                SyntheticSource(SyntheticCorpusSpec(
                    level=3, frame_count=count, seed=seed, label="Complex_Video")),
            )

        publish_segment(16, 1)   # frames 24..39 (24 demo frames preexist)
        service.pump_subscriptions()
        publish_segment(21, 2)   # frames 40..60
        service.pump_subscriptions()
        publish_segment(39, 3)   # frames 61..99
        service.pump_subscriptions()
        events = service.fetch_matches(subscription.id, 10)
        assert len(events) == 1
        assert events[0].seq_span == (40, 60)
        assert events[0].topic == DEMO_TOPIC

    def test_no_evaluation_before_cadence(self, tmp_path):
        evaluations = []

        def spy(answer, topic, span):
            evaluations.append(span)
            return False

        service = make_service(tmp_path, appendix_script(), relevance=spy)
        service.subscribe("anything", [DEMO_TOPIC], cadence_frames=48)
        service.broker.ingest_stream(
            DEMO_TOPIC,
            SyntheticSource(SyntheticCorpusSpec(level=1, frame_count=10,
                                                label="Complex_Video")),
        )
        service.pump_subscriptions()
        assert evaluations == []

    def test_drop_oldest_beyond_capacity(self, tmp_path):
        service = make_service(tmp_path, appendix_script(),
                               relevance=lambda a, t, s: True)
        subscription = service.subscribe("always", [DEMO_TOPIC],
                                         cadence_frames=1, capacity=3)
        for seed in range(5):
            service.broker.ingest_stream(
                DEMO_TOPIC,
                SyntheticSource(SyntheticCorpusSpec(level=1, frame_count=2,
                                                    seed=seed,
                                                    label="Complex_Video")),
            )
            service.pump_subscriptions()
        assert len(subscription.buffer) == 3
        assert subscription.drops == 2
        spans = [e.seq_span for e in service.fetch_matches(subscription.id, 10)]
        assert spans == [(28, 29), (30, 31), (32, 33)]  # three newest windows

    def test_fetch_is_destructive(self, tmp_path):
        service = make_service(tmp_path, appendix_script(),
                               relevance=lambda a, t, s: True)
        subscription = service.subscribe("always", [DEMO_TOPIC], cadence_frames=1)
        service.broker.ingest_stream(
            DEMO_TOPIC,
            SyntheticSource(SyntheticCorpusSpec(level=1, frame_count=4,
                                                label="Complex_Video")),
        )
        service.pump_subscriptions()
        first = service.fetch_matches(subscription.id, 10)
        assert len(first) == 1
        assert service.fetch_matches(subscription.id, 10) == []

    def test_unsubscribe_stops_evaluation(self, tmp_path):
        service = make_service(tmp_path, appendix_script(),
                               relevance=lambda a, t, s: True)
        subscription = service.subscribe("always", [DEMO_TOPIC], cadence_frames=1)
        service.unsubscribe(subscription.id)
        service.broker.ingest_stream(
            DEMO_TOPIC,
            SyntheticSource(SyntheticCorpusSpec(level=1, frame_count=4,
                                                label="Complex_Video")),
        )
        assert service.pump_subscriptions() == 0
        with pytest.raises(UnknownSubscription):
            service.fetch_matches(subscription.id, 1)

    def test_unknown_topic_rejected(self, tmp_path):
        service = make_service(tmp_path, appendix_script())
        with pytest.raises(UnknownTopic):
            service.subscribe("q", ["camera-99"])

    def test_sync_async_equivalence_on_fixed_stream(self, tmp_path):
        """One-shot subscription answer equals a sync query over the stream."""
        service = make_service(tmp_path, appendix_script(),
                               relevance=lambda a, t, s: True)
        session = service.create_session("2-agent")
        sync_answer, _ = service.query(session.id, DEMO_QUERY)
        subscription = service.subscribe(DEMO_QUERY, [DEMO_TOPIC], cadence_frames=24)
        service.broker.ingest_stream(
            DEMO_TOPIC,
            SyntheticSource(demo_corpus_spec()),
        )
        service.pump_subscriptions()
        events = service.fetch_matches(subscription.id, 1)
        assert events[0].answer == sync_answer


@pytest.fixture
def client(tmp_path):
    topics = [f"camera-{i}" for i in range(1, 6)]
    service = make_service(tmp_path, appendix_script(), topics=topics)
    return TestClient(build_app(service)), service


class TestHttpApi:
    def test_query_round_trip(self, client):
        http, _ = client
        created = http.post("/sessions", json={"topology": "2-agent"})
        assert created.status_code == 200
        session_id = created.json()["session_id"]
        response = http.post(f"/sessions/{session_id}/query",
                             json={"text": DEMO_QUERY})
        assert response.status_code == 200
        body = response.json()
        assert "busy highway" in body["answer"]
        report = body["report"]
        total = report["total_ms"]
        parts = (report["model_ms"] + report["extract_ms"] + report["create_ms"]
                 + report["consume_ms"] + report["overhead_ms"])
        assert parts == pytest.approx(total)

    def test_transcript_endpoint(self, client):
        http, _ = client
        session_id = http.post("/sessions", json={}).json()["session_id"]
        http.post(f"/sessions/{session_id}/query", json={"text": DEMO_QUERY})
        messages = http.get(f"/sessions/{session_id}/transcript").json()["messages"]
        assert len(messages) == 10
        assert messages[0]["content"] == DEMO_QUERY

    def test_unknown_session_is_404(self, client):
        http, _ = client
        assert http.get("/sessions/ghost/transcript").status_code == 404
        assert http.post("/sessions/ghost/query",
                         json={"text": "x"}).status_code == 404

    def test_event_stream_replays_messages_and_spans(self, client):
        http, _ = client
        session_id = http.post("/sessions", json={}).json()["session_id"]
        http.post(f"/sessions/{session_id}/query", json={"text": DEMO_QUERY})
        response = http.get(f"/sessions/{session_id}/events?live=0")
        assert response.status_code == 200
        events = []
        current = None
        for line in response.text.splitlines():
            if line.startswith("event: "):
                current = line[len("event: "):]
            elif line.startswith("data: ") and current:
                events.append((current, json.loads(line[len("data: "):])))
        kinds = [name for name, _ in events]
        assert kinds.count("message") == 10
        assert "span" in kinds
        assert kinds[-1] == "report"
        report = events[-1][1]
        assert "total_ms" in report

    def test_topics_endpoint_lists_counts_and_thumbnails(self, client):
        http, _ = client
        body = http.get("/topics").json()
        names = [t["name"] for t in body["topics"]]
        assert names == [f"camera-{i}" for i in range(1, 6)]
        first = body["topics"][0]
        assert first["frame_count"] == 24
        assert first["thumbnail"]["objects"]

    def test_subscription_endpoints(self, client):
        http, service = client
        created = http.post("/subscriptions", json={
            "query": "anything moving?",
            "topics": [DEMO_TOPIC],
            "cadence_frames": 1,
        })
        sub_id = created.json()["subscription_id"]
        service.relevance = lambda a, t, s: True
        service.broker.ingest_stream(
            DEMO_TOPIC,
            SyntheticSource(SyntheticCorpusSpec(level=1, frame_count=4,
                                                label="Complex_Video")),
        )
        service.pump_subscriptions()
        body = http.get(f"/subscriptions/{sub_id}/matches?max=5").json()
        assert len(body["matches"]) == 1
        assert http.get(f"/subscriptions/{sub_id}/matches?max=5").json()["matches"] == []
        assert http.delete(f"/subscriptions/{sub_id}").json() == {"ok": True}
        assert http.get(f"/subscriptions/{sub_id}/matches").status_code == 404

    def test_metrics_endpoint_groups_reports(self, client):
        http, _ = client
        session_id = http.post("/sessions", json={}).json()["session_id"]
        http.post(f"/sessions/{session_id}/query", json={"text": DEMO_QUERY})
        body = http.get("/metrics/reports?group_by=topology").json()
        assert body["rows"][0]["group"] == "2-agent"

    def test_pipeline_error_maps_to_500(self, tmp_path):
        behavior = ScriptedBehavior(
            steps=[ScriptStep(
                response=GatewayResponse(
                    tool_calls=[ToolCallSpec(name="reanalyze", args={})]
                ),
                match={"purpose": "turn"},
            )],
            default=GatewayResponse(content="TERMINATE"),
        )
        service = make_service(tmp_path, behavior)
        http = TestClient(build_app(service), raise_server_exceptions=False)
        session_id = http.post("/sessions", json={}).json()["session_id"]
        response = http.post(f"/sessions/{session_id}/query", json={"text": "x"})
        assert response.status_code == 500
        assert "unexpected error" in response.json()["detail"].lower()
