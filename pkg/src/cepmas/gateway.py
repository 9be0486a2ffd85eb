"""Model gateway: one interface, three backends.

* ScriptedBackend replays deterministic responses from an ordered rule list
  (first matching step wins; steps are persistent, so a step earlier in the
  file shadows later steps with overlapping conditions).
* ProfileBackend returns canned content after a seeded delay draw, used to
  simulate measured model latencies.
* LiveBackend speaks an OpenAI-compatible chat-completions protocol with
  tool calling and image attachments.
"""
from __future__ import annotations

import base64
import json
import logging
import random
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

from .clocks import Clock, MonotonicClock
from .errors import (
    GatewayProtocolError,
    GatewayTimeout,
    GatewayUnavailable,
    ScriptParseError,
)

logger = logging.getLogger(__name__)

TERMINATE = "TERMINATE"

PURPOSE_TURN = "turn"
PURPOSE_SPEAKER = "speaker"
PURPOSE_JUDGE = "judge"


@dataclass
class ToolCallSpec:
    """A suggested tool invocation: name plus argument map."""

    name: str
    args: dict[str, Any]
    id: str = ""


@dataclass
class GatewayRequest:
    purpose: str
    transcript_tail: list[dict[str, Any]] = field(default_factory=list)
    available_tools: list[dict[str, Any]] = field(default_factory=list)
    attachments: list[str] = field(default_factory=list)

    def last_text(self) -> str:
        """Content of the final tail entry, falling back to its tool result."""
        if not self.transcript_tail:
            return ""
        last = self.transcript_tail[-1]
        if last.get("content"):
            return str(last["content"])
        response = last.get("tool_response")
        if response:
            return str(response.get("value", ""))
        return ""

    def tail_text(self) -> str:
        parts = []
        for entry in self.transcript_tail:
            if entry.get("content"):
                parts.append(str(entry["content"]))
            response = entry.get("tool_response")
            if response and response.get("value"):
                parts.append(str(response["value"]))
        return "\n".join(parts)


@dataclass
class GatewayResponse:
    content: str = ""
    tool_calls: list[ToolCallSpec] = field(default_factory=list)
    latency_ms: float = 0.0


class Gateway(Protocol):
    def complete(self, request: GatewayRequest) -> GatewayResponse: ...


# --- scripted backend -------------------------------------------------------


@dataclass
class ScriptStep:
    """Match condition -> response, with an optional injected delay."""

    response: GatewayResponse
    match: dict[str, Any] = field(default_factory=dict)
    delay_ms: float = 0.0

    def accepts(self, request: GatewayRequest) -> bool:
        purpose = self.match.get("purpose")
        if purpose is not None and request.purpose != purpose:
            return False
        has_attachments = self.match.get("has_attachments")
        if has_attachments is not None and bool(request.attachments) != has_attachments:
            return False
        if not self._contains(self.match.get("last_contains"), request.last_text()):
            return False
        if not self._contains(self.match.get("tail_contains"), request.tail_text()):
            return False
        return True

    @staticmethod
    def _contains(needles, haystack: str) -> bool:
        if needles is None:
            return True
        if isinstance(needles, str):
            needles = [needles]
        return all(needle in haystack for needle in needles)

    def unconditional(self) -> bool:
        return not any(
            key in self.match
            for key in ("purpose", "has_attachments", "last_contains", "tail_contains")
        )


@dataclass
class ScriptedBehavior:
    steps: list[ScriptStep]
    default: GatewayResponse = field(default_factory=lambda: GatewayResponse(content=TERMINATE))
    default_delay_ms: float = 0.0


def _parse_response(raw: dict[str, Any]) -> GatewayResponse:
    calls = [
        ToolCallSpec(name=c["name"], args=dict(c.get("args", {})))
        for c in raw.get("tool_calls", [])
    ]
    content = raw.get("content", "")
    if calls and content.rstrip().endswith(TERMINATE):
        raise ValueError("a step may carry tool calls or a TERMINATE answer, not both")
    return GatewayResponse(content=content, tool_calls=calls)


def parse_script(text: str, origin: str = "<script>") -> ScriptedBehavior:
    """Parse line-delimited script records (match, response, delay_ms).

    A record with ``"match": null`` defines the default response; records with
    an empty or missing match object are unconditional steps.
    """
    steps: list[ScriptStep] = []
    default: GatewayResponse | None = None
    default_delay = 0.0
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScriptParseError(f"bad JSON in {origin}: {exc.msg}", line=line_no) from exc
        if not isinstance(record, dict) or "response" not in record:
            raise ScriptParseError(f"record needs a 'response' field in {origin}", line=line_no)
        try:
            response = _parse_response(record["response"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScriptParseError(f"bad response in {origin}: {exc}", line=line_no) from exc
        delay = float(record.get("delay_ms", 0))
        if record.get("match", {}) is None:
            default = response
            default_delay = delay
            continue
        steps.append(ScriptStep(response=response, match=record.get("match", {}), delay_ms=delay))
    if not steps and default is None:
        raise ScriptParseError(f"script {origin} is empty", line=None)
    _warn_unreachable(steps, origin)
    behavior = ScriptedBehavior(steps=steps)
    if default is not None:
        behavior.default = default
        behavior.default_delay_ms = default_delay
    return behavior


def _warn_unreachable(steps: list[ScriptStep], origin: str) -> None:
    # First match wins, so any step behind an unconditional one can never fire.
    for i, step in enumerate(steps[:-1]):
        if step.unconditional():
            logger.warning(
                "%s: step %d matches unconditionally; %d later step(s) are unreachable",
                origin, i + 1, len(steps) - i - 1,
            )
            return


def load_script(path: Path | str) -> ScriptedBehavior:
    path = Path(path)
    if not path.is_file():
        raise ScriptParseError(f"script file not found: {path}", line=None)
    return parse_script(path.read_text(), origin=str(path))


def _copy_response(response: GatewayResponse, latency: float) -> GatewayResponse:
    return GatewayResponse(
        content=response.content,
        tool_calls=[ToolCallSpec(name=c.name, args=dict(c.args)) for c in response.tool_calls],
        latency_ms=latency,
    )


class ScriptedBackend:
    """Deterministic backend replaying a ScriptedBehavior."""

    def __init__(self, behavior: ScriptedBehavior, clock: Clock | None = None,
                 deadline_ms: float | None = None):
        self.behavior = behavior
        self.clock = clock or MonotonicClock()
        self.deadline_ms = deadline_ms
        self._lock = threading.Lock()

    def complete(self, request: GatewayRequest) -> GatewayResponse:
        with self._lock:  # keep step matching and delays serialized
            for step in self.behavior.steps:
                if step.accepts(request):
                    return self._respond(step.response, step.delay_ms)
            return self._respond(self.behavior.default, self.behavior.default_delay_ms)

    def _respond(self, response: GatewayResponse, delay_ms: float) -> GatewayResponse:
        if self.deadline_ms is not None and delay_ms > self.deadline_ms:
            self.clock.sleep_ms(self.deadline_ms)
            raise GatewayTimeout(
                f"scripted delay {delay_ms} ms exceeds deadline {self.deadline_ms} ms"
            )
        start = self.clock.now_ms()
        self.clock.sleep_ms(delay_ms)
        return _copy_response(response, latency=self.clock.now_ms() - start)


# --- profile backend ----------------------------------------------------------


@dataclass
class DelayProfile:
    """Seeded delay distribution in milliseconds."""

    kind: str = "fixed"  # fixed | uniform | normal
    value_ms: float = 0.0
    low_ms: float = 0.0
    high_ms: float = 0.0
    sigma_ms: float = 0.0

    def draw(self, rng: random.Random) -> float:
        if self.kind == "fixed":
            return self.value_ms
        if self.kind == "uniform":
            return rng.uniform(self.low_ms, self.high_ms)
        if self.kind == "normal":
            return max(0.0, rng.gauss(self.value_ms, self.sigma_ms))
        raise ValueError(f"unknown delay profile kind {self.kind!r}")


class ProfileBackend:
    """Canned content after a drawn delay; used for latency simulation."""

    def __init__(self, profile: DelayProfile, content: str = TERMINATE,
                 seed: int = 0, clock: Clock | None = None):
        self.profile = profile
        self.content = content
        self.clock = clock or MonotonicClock()
        self._rng = random.Random(seed)
        self._lock = threading.Lock()

    def complete(self, request: GatewayRequest) -> GatewayResponse:
        with self._lock:
            delay = self.profile.draw(self._rng)
        start = self.clock.now_ms()
        self.clock.sleep_ms(delay)
        return GatewayResponse(content=self.content, latency_ms=self.clock.now_ms() - start)


# --- live backend ---------------------------------------------------------------

MAX_ATTACHED_FRAMES = 16


class LiveBackend:
    """OpenAI-compatible chat-completions client (chat + vision + tools).

    Endpoint, model and key come from configuration or the environment
    (CEP_GATEWAY_URL, CEP_GATEWAY_MODEL, CEP_GATEWAY_KEY).  Live output is
    never part of the acceptance surface.
    """

    def __init__(self, url: str, model: str, api_key: str = "",
                 timeout_s: float = 120.0, max_frames: int = MAX_ATTACHED_FRAMES,
                 transport=None):
        if not url:
            raise GatewayUnavailable("live backend needs an endpoint URL")
        self.url = url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.max_frames = max_frames
        self._transport = transport

    def _client(self):
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return httpx.Client(
            headers=headers, timeout=self.timeout_s, transport=self._transport
        )

    def complete(self, request: GatewayRequest) -> GatewayResponse:
        import httpx

        payload = {
            "model": self.model,
            "messages": self._messages(request),
        }
        if request.available_tools:
            payload["tools"] = [self._tool_schema(t) for t in request.available_tools]
        try:
            with self._client() as client:
                http_response = client.post(f"{self.url}/chat/completions", json=payload)
        except httpx.TimeoutException as exc:
            raise GatewayTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise GatewayUnavailable(str(exc)) from exc
        if http_response.status_code != 200:
            raise GatewayUnavailable(
                f"gateway returned HTTP {http_response.status_code}"
            )
        return self._parse(http_response)

    def _messages(self, request: GatewayRequest) -> list[dict[str, Any]]:
        messages: list[dict[str, Any]] = []
        for entry in request.transcript_tail:
            role = entry.get("role") or ("assistant" if entry.get("tool_calls") else "user")
            response = entry.get("tool_response")
            if response:
                messages.append(
                    {
                        "role": "tool",
                        "tool_call_id": response.get("call_id", ""),
                        "content": str(response.get("value", "")),
                    }
                )
                continue
            message: dict[str, Any] = {"role": role, "content": entry.get("content", "")}
            if entry.get("tool_calls"):
                message["tool_calls"] = [
                    {
                        "id": call.get("id", ""),
                        "type": "function",
                        "function": {
                            "name": call["name"],
                            "arguments": json.dumps(call.get("args", {})),
                        },
                    }
                    for call in entry["tool_calls"]
                ]
            messages.append(message)
        if request.attachments:
            messages.append(self._attachment_message(request))
        return messages

    def _attachment_message(self, request: GatewayRequest) -> dict[str, Any]:
        parts: list[dict[str, Any]] = [
            {"type": "text", "text": "Attached camera frames follow."}
        ]
        for encoding, payload in self._frame_payloads(request.attachments):
            if encoding in ("jpeg", "png"):
                mime = f"image/{'png' if encoding == 'png' else 'jpeg'}"
                b64 = base64.b64encode(payload).decode("ascii")
                parts.append(
                    {"type": "image_url", "image_url": {"url": f"data:{mime};base64,{b64}"}}
                )
            else:
                # Synthetic frames ship as structured text.
                parts.append({"type": "text", "text": payload.decode("utf-8", "replace")})
        return {"role": "user", "content": parts}

    def _frame_payloads(self, refs: list[str]) -> list[tuple[str, bytes]]:
        """Flatten attachment refs into (encoding, payload) pairs.

        Video-container and frames-directory refs are exploded into at most
        ``max_frames`` evenly sampled frames; loose files pass through.
        """
        from . import frames as framesmod

        collected: list[tuple[str, bytes]] = []
        for ref in refs:
            path = Path(ref)
            container = None
            if path.is_dir() or (path.is_file()
                                 and path.read_bytes()[:6] == framesmod.VIDEO_MAGIC):
                try:
                    container = framesmod.read_any_container(path)
                except Exception:  # noqa: BLE001 - fall back to raw bytes
                    container = None
            if container is not None:
                collected.extend(
                    (container.encoding, payload) for payload in container.payloads
                )
            elif path.is_file():
                suffix = path.suffix.lower().lstrip(".")
                encoding = {"jpg": "jpeg", "jpeg": "jpeg", "png": "png"}.get(
                    suffix, "raw-synthetic"
                )
                collected.append((encoding, path.read_bytes()))
            else:
                collected.append(("raw-synthetic", ref.encode()))
        return self._sample(collected, self.max_frames)

    @staticmethod
    def _sample(items: list, limit: int) -> list:
        """At most ``limit`` entries, evenly spread across the input."""
        if len(items) <= limit:
            return list(items)
        if limit == 1:
            return [items[0]]
        step = (len(items) - 1) / (limit - 1)
        return [items[round(i * step)] for i in range(limit)]

    @staticmethod
    def _tool_schema(tool: dict[str, Any]) -> dict[str, Any]:
        properties = {
            p["name"]: {"type": "integer" if p.get("type") == "integer" else "string"}
            for p in tool.get("params", [])
        }
        required = [p["name"] for p in tool.get("params", []) if p.get("required", True)]
        return {
            "type": "function",
            "function": {
                "name": tool["name"],
                "description": tool.get("description", ""),
                "parameters": {
                    "type": "object",
                    "properties": properties,
                    "required": required,
                },
            },
        }

    @staticmethod
    def _parse(http_response) -> GatewayResponse:
        try:
            body = http_response.json()
            message = body["choices"][0]["message"]
        except (ValueError, KeyError, IndexError) as exc:
            raise GatewayProtocolError(f"malformed completion response: {exc}") from exc
        calls = []
        for raw in message.get("tool_calls") or []:
            try:
                function = raw["function"]
                args = json.loads(function.get("arguments") or "{}")
                calls.append(
                    ToolCallSpec(name=function["name"], args=args, id=raw.get("id", ""))
                )
            except (KeyError, ValueError) as exc:
                raise GatewayProtocolError(f"malformed tool call: {exc}") from exc
        try:
            latency = http_response.elapsed.total_seconds() * 1000.0
        except RuntimeError:
            latency = 0.0
        return GatewayResponse(
            content=message.get("content") or "", tool_calls=calls, latency_ms=latency
        )
