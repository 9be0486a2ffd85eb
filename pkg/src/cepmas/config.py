"""Pipeline configuration: one YAML file, environment overrides for
gateway credentials only."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .agents import AgentRole, RoleKind, Topology
from .broker import Broker
from .clocks import Clock, MonotonicClock
from .errors import ConfigError
from .flows import appendix_script, build_topology, canonical_script
from .gateway import (
    DelayProfile,
    Gateway,
    LiveBackend,
    ProfileBackend,
    ScriptedBackend,
    load_script,
)
from .metrics import SpanCollector
from .service import QueryService
from .speakers import KeywordRule, PolicyKind, SpeakerPolicy
from .toolbox import ToolRegistry, Toolbox

ENV_URL = "CEP_GATEWAY_URL"
ENV_KEY = "CEP_GATEWAY_KEY"
ENV_MODEL = "CEP_GATEWAY_MODEL"

BUNDLED_SCRIPTS = {"appendix", "2-agent", "3-agent", "4-agent"}


@dataclass
class PipelineConfig:
    workspace: Path = Path("runs/workspace")
    frame_store: str = "frames"
    max_frames_per_topic: int = 0
    decoder_command: str = ""
    gateway_backend: str = "scripted"
    gateway_script: str = "appendix"
    gateway_deadline_ms: float = 0.0
    profile_delay_ms: float = 0.0
    profile_content: str = "TERMINATE"
    live_url: str = ""
    live_model: str = ""
    live_key: str = ""
    topology: str = "2-agent"
    seed: int = 0
    scale: float = 0.01
    runs: int = 5
    fsm_rules: list[KeywordRule] = field(default_factory=list)
    fsm_defaults: dict[str, str] = field(default_factory=dict)
    custom_topologies: dict[str, Topology] = field(default_factory=dict)

    def custom_policy(self) -> SpeakerPolicy | None:
        if not self.fsm_rules and not self.fsm_defaults:
            return None
        return SpeakerPolicy(
            kind=PolicyKind.KEYWORD_FSM,
            rules=list(self.fsm_rules),
            default_edges=dict(self.fsm_defaults),
        )

    def resolve_topology(self, label: str) -> Topology:
        """Named presets plus any topologies declared in the config file."""
        if label in self.custom_topologies:
            return self.custom_topologies[label]
        return build_topology(label)


def load_config(path: Path | str | None) -> PipelineConfig:
    config = PipelineConfig()
    if path is None:
        return _apply_env(config)
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"bad config file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping")

    workspace = raw.get("workspace", {})
    config.workspace = Path(workspace.get("root", config.workspace))

    broker = raw.get("broker", {})
    config.frame_store = broker.get("frame_store", config.frame_store)
    config.max_frames_per_topic = broker.get("max_frames_per_topic", 0)
    config.decoder_command = broker.get("decoder_command", "")

    gateway = raw.get("gateway", {})
    config.gateway_backend = gateway.get("backend", config.gateway_backend)
    if config.gateway_backend not in ("scripted", "profile", "live"):
        raise ConfigError(f"unknown gateway backend {config.gateway_backend!r}")
    config.gateway_script = gateway.get("script", config.gateway_script)
    config.gateway_deadline_ms = float(gateway.get("deadline_ms", 0))
    config.profile_delay_ms = float(gateway.get("profile_delay_ms", 0))
    config.profile_content = gateway.get("profile_content", config.profile_content)
    config.live_url = gateway.get("url", "")
    config.live_model = gateway.get("model", "")
    config.live_key = gateway.get("key", "")

    pipeline = raw.get("pipeline", {})
    config.topology = pipeline.get("topology", config.topology)
    config.seed = int(pipeline.get("seed", 0))
    config.scale = float(pipeline.get("scale", config.scale))
    config.runs = int(pipeline.get("runs", config.runs))

    for rule in raw.get("fsm_rules", []):
        try:
            config.fsm_rules.append(
                KeywordRule(rule["keyword"], rule["from_agent"], rule["next_agent"])
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad FSM rule {rule!r}: {exc}") from exc
    config.fsm_defaults = dict(raw.get("fsm_defaults", {}))
    for entry in raw.get("topologies", []):
        topology = _parse_topology(entry, config)
        config.custom_topologies[topology.label] = topology
    return _apply_env(config)


def _parse_topology(entry: dict, config: PipelineConfig) -> Topology:
    try:
        agents = [
            AgentRole(
                name=agent["name"],
                kind=RoleKind(agent["kind"]),
                tool_names=frozenset(agent.get("tools", [])),
                system_prompt=agent.get("system_prompt", ""),
            )
            for agent in entry["agents"]
        ]
        policy_name = entry.get("policy", "round-robin")
        if policy_name == "keyword-fsm":
            policy = config.custom_policy()
            if policy is None:
                raise ConfigError(
                    f"topology {entry.get('name')!r} wants keyword-fsm but no "
                    "fsm_rules/fsm_defaults are configured"
                )
        else:
            policy = SpeakerPolicy(kind=PolicyKind(policy_name), seed=config.seed)
        return Topology(
            label=entry["name"],
            agents=agents,
            policy=policy,
            max_rounds=int(entry.get("max_rounds", 20)),
        )
    except ConfigError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad topology definition {entry!r}: {exc}") from exc


def _apply_env(config: PipelineConfig) -> PipelineConfig:
    config.live_url = os.environ.get(ENV_URL, config.live_url)
    config.live_key = os.environ.get(ENV_KEY, config.live_key)
    config.live_model = os.environ.get(ENV_MODEL, config.live_model)
    return config


def build_gateway(config: PipelineConfig, clock: Clock) -> Gateway:
    deadline = config.gateway_deadline_ms or None
    if config.gateway_backend == "scripted":
        name = config.gateway_script
        if name == "appendix":
            behavior = appendix_script()
        elif name in BUNDLED_SCRIPTS:
            behavior = canonical_script(name if name != "appendix" else "2-agent")
        else:
            behavior = load_script(name)
        return ScriptedBackend(behavior, clock=clock, deadline_ms=deadline)
    if config.gateway_backend == "profile":
        return ProfileBackend(
            DelayProfile(kind="fixed", value_ms=config.profile_delay_ms),
            content=config.profile_content,
            seed=config.seed,
            clock=clock,
        )
    return LiveBackend(
        url=config.live_url,
        model=config.live_model,
        api_key=config.live_key,
        timeout_s=(config.gateway_deadline_ms / 1000.0) if config.gateway_deadline_ms else 120.0,
    )


@dataclass
class PipelineBundle:
    config: PipelineConfig
    clock: Clock
    collector: SpanCollector
    broker: Broker
    registry: ToolRegistry
    gateway: Gateway
    toolbox: Toolbox
    service: QueryService


def build_pipeline(config: PipelineConfig, clock: Clock | None = None) -> PipelineBundle:
    clock = clock or MonotonicClock()
    collector = SpanCollector()
    workspace = Path(config.workspace)
    workspace.mkdir(parents=True, exist_ok=True)
    broker = Broker(
        frame_store=workspace / config.frame_store,
        max_frames_per_topic=config.max_frames_per_topic,
        decoder_command=config.decoder_command or None,
    )
    gateway = build_gateway(config, clock)
    registry = ToolRegistry(clock=clock, collector=collector)
    toolbox = Toolbox(broker=broker, workspace=workspace, gateway=gateway,
                      registry=registry)
    service = QueryService(
        broker=broker,
        registry=registry,
        gateway=gateway,
        clock=clock,
        collector=collector,
        default_topology=config.topology,
        topology_resolver=config.resolve_topology,
    )
    return PipelineBundle(
        config=config,
        clock=clock,
        collector=collector,
        broker=broker,
        registry=registry,
        gateway=gateway,
        toolbox=toolbox,
        service=service,
    )
