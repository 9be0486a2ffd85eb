"""In-process publish/subscribe broker for per-camera frame streams.

Publishers and subscribers are fully decoupled: publishing appends to a
per-topic log and never touches subscriber state, subscribers pull through
cursored handles.  Camera topics follow the ``camera-<n>`` convention;
auxiliary topics may use any whitespace-free name.
"""
from __future__ import annotations

import itertools
import re
import shlex
import subprocess
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol, runtime_checkable

from . import frames as framesmod
from .errors import (
    DecoderUnavailable,
    DuplicateTopic,
    InvalidName,
    MalformedFrame,
    NoFrames,
    SourceNotFound,
    StaleHandle,
    UnknownTopic,
)
from .frames import FramesContainer, SyntheticCorpusSpec

_CAMERA_RE = re.compile(r"^camera-[1-9]\d*$")


def validate_topic_name(name: str) -> str:
    if not name or any(ch.isspace() for ch in name):
        raise InvalidName(f"topic name must be non-empty without whitespace: {name!r}")
    # Names under the camera prefix are reserved for camera streams and must
    # carry a positive integer suffix.
    if name.startswith("camera-") and not _CAMERA_RE.match(name):
        raise InvalidName(f"camera topics must look like camera-<n>: {name!r}")
    return name


@dataclass(frozen=True)
class FrameMessage:
    """One camera frame on a topic."""

    topic: str
    seq: int
    captured_at_ms: int
    width: int
    height: int
    payload: bytes | str  # inline bytes or a path inside the frame store
    encoding: str = "raw-synthetic"

    def payload_bytes(self, frame_store: Path | None = None) -> bytes:
        if isinstance(self.payload, bytes):
            return self.payload
        root = frame_store if frame_store is not None else Path(".")
        return (root / self.payload).read_bytes()


@dataclass
class SubscriberHandle:
    id: str
    topic: str
    cursor: int = -1  # last-delivered seq


@dataclass
class IngestSummary:
    topic: str
    frame_count: int
    duration_ms: int
    label: str


@dataclass
class _Topic:
    name: str
    log: list[FrameMessage]
    next_seq: int = 0
    last_segment_size: int = 0
    last_segment_label: str = ""
    segment_frame_rate: int = 24


@runtime_checkable
class BrokerAdapter(Protocol):
    """Contract for external-broker adapters (Kafka-compatible endpoints).

    Topic names map 1:1 onto the external system.  The in-process Broker is
    the authoritative implementation; an adapter only needs this surface to
    slot under the toolbox and query service.
    """

    def create_topic(self, name: str) -> str: ...

    def publish(self, topic_name: str, frame: "FrameMessage") -> int: ...

    def consume_latest(self, topic_name: str,
                       window: int | None = None) -> list["FrameMessage"]: ...

    def subscribe(self, topic_name: str) -> "SubscriberHandle": ...

    def poll(self, handle: "SubscriberHandle") -> list["FrameMessage"]: ...


class Broker:
    """Thread-safe in-memory broker with append-log topics."""

    def __init__(self, frame_store: Path | str | None = None,
                 max_frames_per_topic: int = 0,
                 decoder_command: str | None = None):
        self._topics: dict[str, _Topic] = {}
        self._handles: dict[str, SubscriberHandle] = {}
        self._lock = threading.RLock()
        self._handle_ids = itertools.count(1)
        self.frame_store = Path(frame_store) if frame_store else None
        self.max_frames_per_topic = max_frames_per_topic
        self.decoder_command = decoder_command

    # -- topics -------------------------------------------------------------

    def create_topic(self, name: str) -> str:
        validate_topic_name(name)
        with self._lock:
            if name in self._topics:
                raise DuplicateTopic(name)
            self._topics[name] = _Topic(name=name, log=[])
        return name

    def drop_topic(self, name: str) -> None:
        with self._lock:
            if name not in self._topics:
                raise UnknownTopic(name)
            del self._topics[name]

    def list_topics(self) -> list[str]:
        with self._lock:
            return list(self._topics)

    def has_topic(self, name: str) -> bool:
        with self._lock:
            return name in self._topics

    def topic_stats(self, name: str) -> dict:
        with self._lock:
            topic = self._get(name)
            latest = topic.log[-1] if topic.log else None
            return {
                "name": name,
                "frame_count": topic.next_seq,
                "retained": len(topic.log),
                "latest_seq": latest.seq if latest else -1,
                "width": latest.width if latest else None,
                "height": latest.height if latest else None,
            }

    def _get(self, name: str) -> _Topic:
        topic = self._topics.get(name)
        if topic is None:
            raise UnknownTopic(name)
        return topic

    # -- publish / consume ----------------------------------------------------

    def _validate_frame(self, frame: FrameMessage) -> None:
        if frame.width <= 0 or frame.height <= 0:
            raise MalformedFrame(f"non-positive resolution {frame.width}x{frame.height}")
        if frame.encoding not in framesmod.ENCODINGS:
            raise MalformedFrame(f"unknown encoding {frame.encoding!r}")
        if frame.captured_at_ms < 0:
            raise MalformedFrame("captured_at_ms must be >= 0")
        if isinstance(frame.payload, str):
            if self.frame_store is None:
                raise MalformedFrame("path payload requires a configured frame store")
            resolved = (self.frame_store / frame.payload).resolve()
            if not resolved.is_relative_to(self.frame_store.resolve()):
                raise MalformedFrame(f"payload escapes the frame store: {frame.payload}")

    def publish(self, topic_name: str, frame: FrameMessage) -> int:
        """Append a frame; returns the assigned seq.

        Never blocks on subscriber presence: delivery happens in poll().
        """
        self._validate_frame(frame)
        with self._lock:
            topic = self._get(topic_name)
            seq = topic.next_seq
            stamped = replace(frame, topic=topic_name, seq=seq)
            topic.log.append(stamped)
            topic.next_seq += 1
            if self.max_frames_per_topic and len(topic.log) > self.max_frames_per_topic:
                del topic.log[0]  # drop-oldest retention
        return seq

    def consume_latest(self, topic_name: str, window: int | None = None) -> list[FrameMessage]:
        """Most recent frames in ascending seq order; non-destructive.

        ``window=None`` means one ingestion segment (the frames of the most
        recent ingest_stream call).
        """
        with self._lock:
            topic = self._get(topic_name)
            if not topic.log:
                raise NoFrames(topic_name)
            if window is None:
                window = topic.last_segment_size or len(topic.log)
            if window < 1:
                raise ValueError("window must be >= 1")
            return list(topic.log[-window:])

    # -- subscriptions ---------------------------------------------------------

    def subscribe(self, topic_name: str) -> SubscriberHandle:
        with self._lock:
            self._get(topic_name)
            handle = SubscriberHandle(id=f"sub-{next(self._handle_ids)}", topic=topic_name)
            self._handles[handle.id] = handle
        return handle

    def poll(self, handle: SubscriberHandle) -> list[FrameMessage]:
        """All frames with seq > cursor; advances the cursor.

        Handles are single-consumer: do not call poll concurrently on one
        handle.
        """
        with self._lock:
            if handle.topic not in self._topics:
                raise StaleHandle(handle.topic)
            topic = self._topics[handle.topic]
            fresh = [f for f in topic.log if f.seq > handle.cursor]
            if fresh:
                handle.cursor = fresh[-1].seq
        return fresh

    # -- ingestion ---------------------------------------------------------------

    def ingest_container(self, topic_name: str, container: FramesContainer,
                         label: str = "") -> IngestSummary:
        rate = max(1, container.manifest.frame_rate)
        count = 0
        with self._lock:
            topic = self._get(topic_name)
            base = topic.next_seq
        for i, payload in enumerate(container.payloads):
            frame = FrameMessage(
                topic=topic_name,
                seq=-1,
                captured_at_ms=int((base + i) * 1000 / rate),
                width=container.manifest.width,
                height=container.manifest.height,
                payload=payload,
                encoding=container.encoding,
            )
            self.publish(topic_name, frame)
            count += 1
        with self._lock:
            topic = self._get(topic_name)
            topic.last_segment_size = count
            topic.last_segment_label = label or topic_name
            topic.segment_frame_rate = rate
        return IngestSummary(
            topic=topic_name,
            frame_count=count,
            duration_ms=int(count * 1000 / rate),
            label=label or topic_name,
        )

    def ingest_stream(self, topic_name: str, source: "StreamSource") -> IngestSummary:
        """Publish every frame of a source in capture order."""
        container, label = source.load(self)
        return self.ingest_container(topic_name, container, label=label)

    def segment_info(self, topic_name: str) -> tuple[int, str, int]:
        with self._lock:
            topic = self._get(topic_name)
            return topic.last_segment_size, topic.last_segment_label, topic.segment_frame_rate


# --- stream sources -------------------------------------------------------------


@dataclass
class DirectorySource:
    """Directory-of-frames container on disk."""

    path: Path
    label: str = ""

    def load(self, broker: Broker) -> tuple[FramesContainer, str]:
        path = Path(self.path)
        if not path.exists():
            raise SourceNotFound(str(path))
        container = framesmod.read_frames_dir(path)
        return container, self.label or path.name


@dataclass
class SyntheticSource:
    """Deterministic generated corpus for a complexity level."""

    spec: SyntheticCorpusSpec

    def load(self, broker: Broker) -> tuple[FramesContainer, str]:
        container = framesmod.generate_corpus(self.spec)
        return container, self.spec.label or f"level-{self.spec.level}"


@dataclass
class VideoFileSource:
    """External video file decoded by a configured command template.

    The template receives ``{input}`` and ``{output_dir}`` and must produce a
    directory-of-frames container at ``{output_dir}``.
    """

    path: Path
    work_dir: Path
    label: str = ""

    def load(self, broker: Broker) -> tuple[FramesContainer, str]:
        path = Path(self.path)
        if not path.exists():
            raise SourceNotFound(str(path))
        if not broker.decoder_command:
            raise DecoderUnavailable("no decoder command configured")
        out_dir = Path(self.work_dir) / f"{path.stem}_decoded"
        out_dir.mkdir(parents=True, exist_ok=True)
        command = [
            part.format(input=str(path), output_dir=str(out_dir))
            for part in shlex.split(broker.decoder_command)
        ]
        try:
            subprocess.run(command, check=True, capture_output=True)
        except (OSError, subprocess.CalledProcessError) as exc:
            raise DecoderUnavailable(f"decoder command failed: {exc}") from exc
        container = framesmod.read_frames_dir(out_dir)
        return container, self.label or path.stem


StreamSource = DirectorySource | SyntheticSource | VideoFileSource
