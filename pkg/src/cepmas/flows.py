"""Canonical topologies and their deterministic scripted flows.

The three preset topologies (2/3/4 agents) each come with a scripted
gateway behavior that walks the full toolchain for the demo query.  Flow
verbosity grows with agent count — the larger presets spend extra turns on
inter-agent coordination, which is exactly what drives their higher
conversation overhead.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .agents import AgentRole, RoleKind, Topology
from .gateway import (
    GatewayResponse,
    ScriptStep,
    ScriptedBehavior,
    ToolCallSpec,
    parse_script,
)
from .speakers import (
    ENGINEER_1,
    ENGINEER_2,
    REFLECTION,
    USER_PROXY,
    canonical_four_agent_rules,
    canonical_three_agent_rules,
    round_robin_policy,
)
from .frames import SyntheticCorpusSpec
from .toolbox import CONSUME_TOOL, CREATE_TOOL, EXTRACT_TOOL, MODEL_TOOL

DEMO_QUERY = "What is happening in the video in camera-1?"
DEMO_TOPIC = "camera-1"
DEMO_LABEL = "Complex_Video"

MODEL_DESCRIPTION = (
    "The frames from the video show a busy highway with multiple lanes of "
    "traffic. The vehicles include cars, vans, trucks, and motorcycles, all "
    "traveling in both directions. The scenes appear to be captured during "
    "dusk or early evening, as the headlights of the vehicles are on. The "
    "traffic seems to be moving smoothly without any visible congestion or "
    "accidents. The road is divided by a central barrier, and the vehicles "
    "are maintaining a steady flow.TERMINATE"
)

FINAL_SUMMARY = (
    "The camera-1 feed shows a busy highway with multiple lanes of traffic "
    "moving steadily in both directions at dusk. TERMINATE"
)

ALL_TOOLS = frozenset({CONSUME_TOOL, EXTRACT_TOOL, CREATE_TOOL, MODEL_TOOL})

TOPOLOGY_LABELS = ("2-agent", "3-agent", "4-agent")

# Gateway consults per canonical flow; the per-turn delay of a simulated run
# is overhead / consults.
CONSULTS = {"2-agent": 5, "3-agent": 7, "4-agent": 9}


def demo_corpus_spec(width: int = 1920, height: int = 1080,
                     frame_count: int = 24, seed: int = 7) -> SyntheticCorpusSpec:
    return SyntheticCorpusSpec(
        level=3,
        frame_count=frame_count,
        width=width,
        height=height,
        frame_rate=24,
        seed=seed,
        label=DEMO_LABEL,
    )


# --- topology presets -----------------------------------------------------------


def two_agent_topology(max_rounds: int = 20) -> Topology:
    return Topology(
        label="2-agent",
        agents=[
            AgentRole(name="Admin", kind=RoleKind.USER_PROXY,
                      system_prompt="Relay user prompts and tool results."),
            AgentRole(name="Engineer", kind=RoleKind.ENGINEER, tool_names=ALL_TOOLS,
                      system_prompt="Run the video toolchain for user queries."),
        ],
        policy=round_robin_policy(),
        max_rounds=max_rounds,
    )


def three_agent_topology(max_rounds: int = 20) -> Topology:
    return Topology(
        label="3-agent",
        agents=[
            AgentRole(name="Admin", kind=RoleKind.USER_PROXY),
            AgentRole(name="Engineer", kind=RoleKind.ENGINEER, tool_names=ALL_TOOLS,
                      system_prompt="Run the video toolchain when asked to recheck."),
            AgentRole(name="Reflection", kind=RoleKind.REFLECTION,
                      system_prompt="Answer the user from context; route keywords."),
        ],
        policy=canonical_three_agent_rules("Admin", "Engineer", "Reflection"),
        max_rounds=max_rounds,
    )


def four_agent_topology(max_rounds: int = 25) -> Topology:
    return Topology(
        label="4-agent",
        agents=[
            AgentRole(name=USER_PROXY, kind=RoleKind.USER_PROXY),
            AgentRole(name=REFLECTION, kind=RoleKind.REFLECTION,
                      system_prompt="Coordinate the engineers via keywords."),
            AgentRole(name=ENGINEER_1, kind=RoleKind.ENGINEER,
                      tool_names=frozenset({CONSUME_TOOL, EXTRACT_TOOL}),
                      system_prompt="Consume streams and extract frames."),
            AgentRole(name=ENGINEER_2, kind=RoleKind.ENGINEER,
                      tool_names=frozenset({CREATE_TOOL, MODEL_TOOL}),
                      system_prompt="Assemble videos and query the model."),
        ],
        policy=canonical_four_agent_rules(),
        max_rounds=max_rounds,
    )


def build_topology(label: str, max_rounds: int | None = None) -> Topology:
    builders = {
        "2-agent": two_agent_topology,
        "3-agent": three_agent_topology,
        "4-agent": four_agent_topology,
    }
    if label not in builders:
        raise ValueError(f"unknown topology preset {label!r}")
    return builders[label]() if max_rounds is None else builders[label](max_rounds)


# --- scripted flows --------------------------------------------------------------


def _turn_step(condition: str, response: GatewayResponse, delay_ms: float) -> ScriptStep:
    return ScriptStep(
        response=response,
        match={"purpose": "turn", "has_attachments": False, "last_contains": condition},
        delay_ms=delay_ms,
    )


def _suggest(*calls: tuple[str, dict]) -> GatewayResponse:
    return GatewayResponse(
        tool_calls=[ToolCallSpec(name=name, args=args) for name, args in calls]
    )


def _say(text: str) -> GatewayResponse:
    return GatewayResponse(content=text)


def bundled_script_text(name: str) -> str:
    return resources.files("cepmas.data.scripts").joinpath(name).read_text()


def appendix_script(turn_delay_ms: float = 0.0) -> ScriptedBehavior:
    """The bundled two-agent replay script with an optional per-turn delay."""
    behavior = parse_script(
        bundled_script_text("appendix_transcript.jsonl"), origin="appendix_transcript"
    )
    for step in behavior.steps:
        step.delay_ms = turn_delay_ms
    return behavior


def three_agent_script(turn_delay_ms: float = 0.0) -> ScriptedBehavior:
    d = turn_delay_ms
    steps = [
        _turn_step(DEMO_QUERY,
                   _say("The camera-1 stream needs a fresh analysis. RECHECK"), d),
        _turn_step("needs a fresh analysis",
                   _suggest((CONSUME_TOOL, {"topic": DEMO_TOPIC})), d),
        _turn_step("A fresh look is warranted",
                   _suggest((CONSUME_TOOL, {"topic": DEMO_TOPIC})), d),
        _turn_step("demo_videos/Complex_Video.mp4",
                   _suggest((EXTRACT_TOOL, {
                       "video_path": "demo_videos/Complex_Video.mp4",
                       "sampling": 1,
                       "output_root": "extracted_frames/",
                   })), d),
        _turn_step("extracted_frames/Complex_Video_frames",
                   _suggest((CREATE_TOOL, {
                       "frames_path": "extracted_frames/Complex_Video_frames",
                       "output_video_path": "new_video/Complex_Video_result.mp4",
                       "frame_rate": 24,
                   })), d),
        _turn_step("new_video/Complex_Video_result.mp4",
                   _suggest((MODEL_TOOL, {
                       "video_path": "new_video/Complex_Video_result.mp4",
                       "user_input": DEMO_QUERY,
                   })), d),
        _turn_step("busy highway",
                   _say("Analysis complete, handing results back. HANDOFF"), d),
        _turn_step("handing results back", _say(FINAL_SUMMARY), d),
        # Follow-up branches.
        _turn_step("Were the headlights on?",
                   _say("Yes - the analysis noted the vehicles' headlights were "
                        "on in the dusk scene. TERMINATE"), d),
        _turn_step("Has anything changed",
                   _say("A fresh look is warranted. RECHECK"), d),
    ]
    return ScriptedBehavior(
        steps=steps, default=_say(MODEL_DESCRIPTION), default_delay_ms=0.0
    )


def four_agent_script(turn_delay_ms: float = 0.0) -> ScriptedBehavior:
    d = turn_delay_ms
    steps = [
        _turn_step(DEMO_QUERY,
                   _say("Stream analysis for camera-1 is required. RECHECK"), d),
        _turn_step("analysis for camera-1 is required",
                   _suggest((CONSUME_TOOL, {"topic": DEMO_TOPIC})), d),
        _turn_step("demo_videos/Complex_Video.mp4",
                   _say("The stream is captured but frames are not extracted "
                        "yet; nothing to assemble."), d),
        _turn_step("not extracted yet",
                   _say("Extraction is still pending. RECHECK"), d),
        _turn_step("Extraction is still pending",
                   _suggest((EXTRACT_TOOL, {
                       "video_path": "demo_videos/Complex_Video.mp4",
                       "sampling": 1,
                       "output_root": "extracted_frames/",
                   })), d),
        _turn_step("extracted_frames/Complex_Video_frames",
                   _suggest((CREATE_TOOL, {
                       "frames_path": "extracted_frames/Complex_Video_frames",
                       "output_video_path": "new_video/Complex_Video_result.mp4",
                       "frame_rate": 24,
                   })), d),
        _turn_step("new_video/Complex_Video_result.mp4",
                   _say("The video is assembled; query the model for the "
                        "description. QUERY"), d),
        _turn_step("query the model",
                   _suggest((MODEL_TOOL, {
                       "video_path": "new_video/Complex_Video_result.mp4",
                       "user_input": DEMO_QUERY,
                   })), d),
        _turn_step("busy highway", _say(FINAL_SUMMARY), d),
    ]
    return ScriptedBehavior(
        steps=steps, default=_say(MODEL_DESCRIPTION), default_delay_ms=0.0
    )


def canonical_script(label: str, turn_delay_ms: float = 0.0) -> ScriptedBehavior:
    builders = {
        "2-agent": appendix_script,
        "3-agent": three_agent_script,
        "4-agent": four_agent_script,
    }
    if label not in builders:
        raise ValueError(f"unknown topology preset {label!r}")
    return builders[label](turn_delay_ms)


MULTI_CAMERA_QUERY = (
    "Are there any red vehicles visible in camera 1, camera 2, camera 3, "
    "camera 4, camera 5?"
)

MULTI_CAMERA_ANSWER = "There are red cars present in camera 1 and camera 3. TERMINATE"


def multi_camera_script() -> ScriptedBehavior:
    steps = [
        _turn_step(
            "red vehicles visible",
            _suggest(*[(CONSUME_TOOL, {"topic": f"camera-{i}"}) for i in range(1, 6)]),
            0.0,
        ),
        _turn_step("camera-5.mp4", _say(MULTI_CAMERA_ANSWER), 0.0),
    ]
    return ScriptedBehavior(steps=steps, default=_say(MODEL_DESCRIPTION))
