"""Exception hierarchy shared across the pipeline."""
from __future__ import annotations


class CepError(Exception):
    """Base class for all pipeline errors."""


# --- broker ---------------------------------------------------------------

class InvalidName(CepError):
    """Topic name is malformed (empty, whitespace, or bad camera suffix)."""


class DuplicateTopic(CepError):
    """Topic name already registered on this broker."""


class UnknownTopic(CepError):
    """Operation addressed a topic that does not exist."""


class NoFrames(CepError):
    """Topic exists but holds no frames."""


class MalformedFrame(CepError):
    """Frame violates a field invariant."""


class StaleHandle(CepError):
    """Subscriber handle refers to a dropped topic."""


class SourceNotFound(CepError):
    """Ingestion or tool source path does not resolve."""


class DecoderUnavailable(CepError):
    """Video-file ingestion requested but no decoder command configured."""


# --- agent runtime --------------------------------------------------------

class TopologyError(CepError):
    """Topology definition violates an invariant."""


class TopologyTooSmall(CepError):
    """Follow-up requested on a topology without a Reflection agent."""


class ConversationTerminated(CepError):
    """Mutation attempted on a terminated conversation."""


class PolicyMisconfigured(CepError):
    """Speaker policy is missing a required collaborator."""


# --- gateway --------------------------------------------------------------

class GatewayUnavailable(CepError):
    """Model backend cannot be reached or is not configured."""


class GatewayTimeout(CepError):
    """Model backend did not answer within the configured deadline."""


class GatewayProtocolError(CepError):
    """Live backend returned a response the client cannot interpret."""


class ScriptParseError(CepError):
    """Scripted-behavior file is malformed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# --- toolbox --------------------------------------------------------------

class EmptyVideo(CepError):
    """Video artifact contains no frames."""


class EmptyFramesDir(CepError):
    """Frames directory contains no frames."""


# --- metrics --------------------------------------------------------------

class SpanOutOfWindow(CepError):
    """Span lies outside the report window."""


class EmptyGroup(CepError):
    """Aggregation requested over an empty report group."""


# --- evaluation -----------------------------------------------------------

class JudgeUnparseable(CepError):
    """Judge reply could not be read as a score."""


class MissingLevel(CepError):
    """Scorecard aggregation is missing a complexity level."""


# --- service --------------------------------------------------------------

class PipelineError(CepError):
    """Query processing failed after redirect/retry was exhausted."""


class UnknownSession(CepError):
    """Session id not registered with the service."""


class UnknownSubscription(CepError):
    """Subscription id not registered with the service."""


class ConfigError(CepError):
    """Pipeline configuration file is invalid."""
