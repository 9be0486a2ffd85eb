from __future__ import annotations

import pytest

from cepmas.broker import Broker, SyntheticSource
from cepmas.clocks import VirtualClock
from cepmas.flows import DEMO_TOPIC, demo_corpus_spec
from cepmas.metrics import SpanCollector
from cepmas.toolbox import ToolRegistry, Toolbox


@pytest.fixture
def clock():
    return VirtualClock()


@pytest.fixture
def collector():
    return SpanCollector()


@pytest.fixture
def broker(tmp_path):
    return Broker(frame_store=tmp_path / "frames")


@pytest.fixture
def demo_broker(tmp_path):
    """Broker with the bundled demo stream on camera-1."""
    broker = Broker(frame_store=tmp_path / "frames")
    broker.create_topic(DEMO_TOPIC)
    broker.ingest_stream(DEMO_TOPIC, SyntheticSource(demo_corpus_spec()))
    return broker


def make_toolbox(broker, workspace, gateway, clock=None, collector=None,
                 delays=None) -> Toolbox:
    registry = ToolRegistry(
        clock=clock or VirtualClock(),
        collector=collector or SpanCollector(),
        delays_ms=delays or {},
    )
    return Toolbox(broker=broker, workspace=workspace, gateway=gateway,
                   registry=registry)
