"""Tool registry and the four canonical pipeline tools.

Tool names are wire identifiers: ``kafka_consume``, ``frame_extraction``,
``create_video_from_frames`` and ``call_model``.  Dispatch is total — any
failure, including a call to a tool that does not exist, comes back as an
error ToolResult rather than an exception, so the agent loop can route it.

All tool paths are strings relative to a sandboxed workspace root; arguments
that escape the root are rejected.
"""
from __future__ import annotations

import logging
import math
import os
import posixpath
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import frames as framesmod
from .broker import Broker
from .clocks import Clock, MonotonicClock
from .errors import CepError, EmptyFramesDir, EmptyVideo, SourceNotFound
from .gateway import Gateway, GatewayRequest, PURPOSE_TURN, ToolCallSpec
from .metrics import LatencySpan, SpanCollector, SpanKind

logger = logging.getLogger(__name__)

CONSUME_TOOL = "kafka_consume"
EXTRACT_TOOL = "frame_extraction"
CREATE_TOOL = "create_video_from_frames"
MODEL_TOOL = "call_model"

SPAN_KIND_BY_TOOL = {
    CONSUME_TOOL: SpanKind.STREAM_CONSUME,
    EXTRACT_TOOL: SpanKind.FRAME_EXTRACTION,
    CREATE_TOOL: SpanKind.VIDEO_CREATION,
    MODEL_TOOL: SpanKind.MODEL_CALL,
}


@dataclass(frozen=True)
class ToolParam:
    name: str
    type: str  # "string" | "integer"
    required: bool = True


@dataclass(frozen=True)
class ToolSpec:
    name: str
    params: tuple[ToolParam, ...]
    description: str

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "params": [
                {"name": p.name, "type": p.type, "required": p.required}
                for p in self.params
            ],
        }


@dataclass
class ToolResult:
    call_id: str
    value: str
    is_error: bool = False
    span: LatencySpan | None = None


Handler = Callable[[dict[str, Any]], str]


class ToolRegistry:
    """Immutable-after-startup registry mapping tool names to handlers."""

    def __init__(self, clock: Clock | None = None,
                 collector: SpanCollector | None = None,
                 delays_ms: dict[str, float] | None = None):
        self._specs: dict[str, ToolSpec] = {}
        self._handlers: dict[str, Handler] = {}
        self.clock = clock or MonotonicClock()
        self.collector = collector or SpanCollector()
        self.delays_ms = delays_ms or {}

    def register(self, spec: ToolSpec, handler: Handler) -> None:
        if spec.name in self._specs:
            raise ValueError(f"tool {spec.name!r} already registered")
        self._specs[spec.name] = spec
        self._handlers[spec.name] = handler

    def specs(self, names: set[str] | None = None) -> list[ToolSpec]:
        if names is None:
            return list(self._specs.values())
        return [s for name, s in self._specs.items() if name in names]

    def has(self, name: str) -> bool:
        return name in self._specs

    def _validate_args(self, spec: ToolSpec, args: dict[str, Any]) -> str | None:
        known = {p.name for p in spec.params}
        for key in args:
            if key not in known:
                return f"unexpected parameter '{key}' for tool '{spec.name}'"
        for param in spec.params:
            if param.name not in args:
                if param.required:
                    return f"missing required parameter '{param.name}' for tool '{spec.name}'"
                continue
            value = args[param.name]
            if param.type == "integer" and not isinstance(value, int):
                return f"parameter '{param.name}' must be an integer"
            if param.type == "string" and not isinstance(value, str):
                return f"parameter '{param.name}' must be a string"
        return None

    def dispatch(self, call: ToolCallSpec, conversation_id: str = "") -> ToolResult:
        """Run a suggested tool call; never raises."""
        spec = self._specs.get(call.name)
        if spec is None:
            return ToolResult(
                call_id=call.id,
                value=f"tool '{call.name}' does not exist",
                is_error=True,
            )
        problem = self._validate_args(spec, call.args)
        if problem is not None:
            return ToolResult(call_id=call.id, value=problem, is_error=True)
        start = self.clock.now_ms()
        try:
            self.clock.sleep_ms(self.delays_ms.get(call.name, 0.0))
            value = self._handlers[call.name](call.args)
            is_error = False
        except CepError as exc:
            value = str(exc)
            is_error = True
        except Exception as exc:  # noqa: BLE001 - dispatch must stay total
            logger.exception("tool %s raised unexpectedly", call.name)
            value = f"tool '{call.name}' failed: {exc}"
            is_error = True
        span = LatencySpan(
            kind=SPAN_KIND_BY_TOOL.get(call.name, SpanKind.AGENT_TURN),
            start_ms=start,
            end_ms=self.clock.now_ms(),
            conversation_id=conversation_id,
        )
        self.collector.record(span)
        return ToolResult(call_id=call.id, value=value, is_error=is_error, span=span)


# --- canonical tool implementations ------------------------------------------------


@dataclass
class Toolbox:
    """The four canonical tools bound to a broker, workspace and gateway."""

    broker: Broker
    workspace: Path
    gateway: Gateway
    registry: ToolRegistry = field(default=None)  # type: ignore[assignment]
    consume_dir: str = "demo_videos"

    def __post_init__(self):
        self.workspace = Path(self.workspace)
        self.workspace.mkdir(parents=True, exist_ok=True)
        if self.registry is None:
            self.registry = ToolRegistry()
        self._register_all()

    def _register_all(self) -> None:
        register = self.registry.register
        register(
            ToolSpec(
                name=CONSUME_TOOL,
                params=(ToolParam("topic", "string"),),
                description="Consume the latest frames from a camera topic and "
                "return the assembled video path.",
            ),
            lambda args: self.consume_stream(args["topic"]),
        )
        register(
            ToolSpec(
                name=EXTRACT_TOOL,
                params=(
                    ToolParam("video_path", "string"),
                    ToolParam("sampling", "integer"),
                    ToolParam("output_root", "string"),
                ),
                description="Extract every sampling-th frame from a video into "
                "a frames directory.",
            ),
            lambda args: self.frame_extraction(
                args["video_path"], args["sampling"], args["output_root"]
            ),
        )
        register(
            ToolSpec(
                name=CREATE_TOOL,
                params=(
                    ToolParam("frames_path", "string"),
                    ToolParam("output_video_path", "string"),
                    ToolParam("frame_rate", "integer"),
                ),
                description="Assemble a frames directory back into a video "
                "artifact at the given frame rate.",
            ),
            lambda args: self.create_video_from_frames(
                args["frames_path"], args["output_video_path"], args["frame_rate"]
            ),
        )
        register(
            ToolSpec(
                name=MODEL_TOOL,
                params=(
                    ToolParam("video_path", "string"),
                    ToolParam("user_input", "string"),
                ),
                description="Send the assembled video plus the user prompt to "
                "the vision model and return its description.",
            ),
            lambda args: self.call_model(args["video_path"], args["user_input"]),
        )

    # -- path sandboxing -------------------------------------------------------

    def _resolve(self, rel: str) -> Path:
        candidate = (self.workspace / rel).resolve()
        if not candidate.is_relative_to(self.workspace.resolve()):
            raise SourceNotFound(f"path escapes the workspace: {rel}")
        return candidate

    # -- tools ---------------------------------------------------------------

    def consume_stream(self, topic: str) -> str:
        """Materialize the latest ingestion segment of a topic as a video."""
        consumed = self.broker.consume_latest(topic)
        _, label, frame_rate = self.broker.segment_info(topic)
        first = consumed[0]
        container = framesmod.FramesContainer(
            manifest=framesmod.ContainerManifest(
                width=first.width,
                height=first.height,
                frame_rate=frame_rate,
                count=len(consumed),
            ),
            payloads=[f.payload_bytes(self.broker.frame_store) for f in consumed],
            encoding=first.encoding,
        )
        rel_video = posixpath.join(self.consume_dir, f"{label}.mp4")
        rel_frames = posixpath.join(self.consume_dir, f"{label}_frames")
        framesmod.write_frames_dir(self._resolve(rel_frames), container)
        self._write_video_atomic(self._resolve(rel_video), container)
        return rel_video

    def frame_extraction(self, video_path: str, sampling: int, output_root: str) -> str:
        """Keep frame indices 0, s, 2s, ... — yields ceil(N / s) frames."""
        if sampling < 1:
            raise SourceNotFound(f"sampling must be >= 1, got {sampling}")
        source = framesmod.read_any_container(self._resolve(video_path))
        if not source.payloads:
            raise EmptyVideo(video_path)
        sampled = sample_payloads(source.payloads, sampling)
        stem = Path(video_path).stem
        rel_out = posixpath.join(output_root, f"{stem}_frames")
        out = framesmod.FramesContainer(
            manifest=framesmod.ContainerManifest(
                width=source.manifest.width,
                height=source.manifest.height,
                frame_rate=source.manifest.frame_rate,
                count=len(sampled),
            ),
            payloads=sampled,
            encoding=source.encoding,
        )
        framesmod.write_frames_dir(self._resolve(rel_out), out)
        return rel_out

    def create_video_from_frames(self, frames_path: str, output_video_path: str,
                                 frame_rate: int) -> str:
        source = framesmod.read_frames_dir(self._resolve(frames_path))
        if not source.payloads:
            raise EmptyFramesDir(frames_path)
        container = framesmod.FramesContainer(
            manifest=framesmod.ContainerManifest(
                width=source.manifest.width,
                height=source.manifest.height,
                frame_rate=frame_rate,
                count=len(source.payloads),
            ),
            payloads=source.payloads,
            encoding=source.encoding,
        )
        self._write_video_atomic(self._resolve(output_video_path), container)
        logger.info("Success! Video Created \\ Stored in %s", output_video_path)
        return output_video_path

    def call_model(self, video_path: str, user_input: str) -> str:
        resolved = self._resolve(video_path)
        if not resolved.exists():
            raise SourceNotFound(video_path)
        request = GatewayRequest(
            purpose=PURPOSE_TURN,
            transcript_tail=[{"sender": "tool", "content": user_input}],
            attachments=[str(resolved)],
        )
        return self.gateway.complete(request).content

    def _write_video_atomic(self, path: Path, container: framesmod.FramesContainer) -> None:
        # Concurrent conversations may materialize the same artifact; stage
        # then replace so readers never see a half-written file.
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        os.close(fd)
        tmp = Path(tmp_name)
        framesmod.write_video_file(tmp, container)
        os.replace(tmp, path)


def sample_payloads(payloads: list[bytes], sampling: int) -> list[bytes]:
    """Every sampling-th frame, starting at index 0."""
    return payloads[::sampling]


def expected_sample_count(total: int, sampling: int) -> int:
    """Independent oracle for the extraction arithmetic."""
    return math.ceil(total / sampling)
