"""Feature evaluation engine.

Loads an agent's configuration, evaluates every enabled feature
independently against the full transcript, and filters out interventions
that were already posted. Features are stateless: each evaluation sees only
the transcript, the agent's author id, the current time, and its own
parsed configuration.
"""

from __future__ import annotations

import abc
import json
import logging
from dataclasses import dataclass
from typing import Any, ClassVar, Mapping

from .errors import MalformedConfig, UnknownFeature
from .transcript import AuthorId, Origin, Transcript

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Intervention:
    """An agent-generated message candidate.

    idempotency_key is a deterministic identifier for the triggering
    condition: re-deriving the same condition on a later poll yields the
    same key, which is how re-posting is prevented. trigger_seq is the seq
    of the last transcript message at evaluation time (-1 when empty).
    """

    body: str
    feature_tag: str
    idempotency_key: str
    trigger_seq: int


@dataclass(frozen=True)
class SessionSpec:
    """Optional session framing: an anchor timestamp and a duration."""

    start_ms: int | None = None
    duration_min: int | None = None


class Feature(abc.ABC):
    """Contract a conversational-agent feature must implement.

    Subclasses parse their own configuration block and evaluate it against
    a transcript. evaluate must be deterministic and side-effect free: same
    (transcript, agent_author, now_ms, config) in, same interventions out.
    """

    name: ClassVar[str]

    @abc.abstractmethod
    def parse_config(self, raw: Mapping[str, Any], session: SessionSpec) -> Any:
        """Validate a raw config block into this feature's config object.

        Raises InvalidParameter for out-of-range values and MalformedConfig
        for shape problems. The session is available for validation and may
        be captured by features that need it at evaluation time.
        """

    @abc.abstractmethod
    def evaluate(
        self,
        transcript: Transcript,
        agent_author: AuthorId,
        now_ms: int,
        config: Any,
    ) -> list[Intervention]:
        """Derive this feature's intervention candidates from the transcript."""


@dataclass(frozen=True)
class AgentConfig:
    """A loaded agent configuration.

    features holds one parsed config per enabled feature, in document
    order. Presence of a block enables the feature; an empty map is the
    control agent that never intervenes.
    """

    agent_author: AuthorId
    session: SessionSpec
    features: tuple[tuple[str, Any], ...]

    def feature_names(self) -> list[str]:
        return [name for name, _ in self.features]


def _parse_session(raw: Any) -> SessionSpec:
    if raw is None:
        return SessionSpec()
    if not isinstance(raw, dict):
        raise MalformedConfig("session must be an object")
    unknown = set(raw) - {"start_ms", "duration_min"}
    if unknown:
        raise MalformedConfig(f"unknown session keys: {sorted(unknown)}")
    start_ms = raw.get("start_ms")
    if start_ms is not None and (not isinstance(start_ms, int) or start_ms < 0):
        raise MalformedConfig("session.start_ms must be a non-negative integer or null")
    duration_min = raw.get("duration_min")
    if duration_min is not None and (not isinstance(duration_min, int) or duration_min <= 0):
        raise MalformedConfig("session.duration_min must be a positive integer or null")
    return SessionSpec(start_ms=start_ms, duration_min=duration_min)


def load_agent_config(text: str, registry: Mapping[str, Feature]) -> AgentConfig:
    """Parse an agent configuration document (JSON text).

    The features map of the result contains exactly the blocks present in
    the document, in document order. Raises MalformedConfig for parse or
    shape failures, UnknownFeature for a block with no registered
    implementation, and InvalidParameter for out-of-range values.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedConfig(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedConfig("top level must be an object")
    unknown = set(doc) - {"agent_author", "session", "features"}
    if unknown:
        raise MalformedConfig(f"unknown top-level keys: {sorted(unknown)}")

    agent_author = doc.get("agent_author")
    if not isinstance(agent_author, str) or not agent_author:
        raise MalformedConfig("agent_author must be a non-empty string")

    session = _parse_session(doc.get("session"))

    raw_features = doc.get("features", {})
    if not isinstance(raw_features, dict):
        raise MalformedConfig("features must be an object")

    parsed: list[tuple[str, Any]] = []
    for name, block in raw_features.items():
        feature = registry.get(name)
        if feature is None:
            raise UnknownFeature(f"no registered feature named {name!r}")
        if not isinstance(block, dict):
            raise MalformedConfig(f"feature block {name!r} must be an object")
        parsed.append((name, feature.parse_config(block, session)))

    return AgentConfig(agent_author=agent_author, session=session, features=tuple(parsed))


def evaluate_all(
    config: AgentConfig,
    registry: Mapping[str, Feature],
    transcript: Transcript,
    now_ms: int,
) -> list[Intervention]:
    """Evaluate every enabled feature and concatenate outputs in config order.

    Features run independently: none observes another's same-cycle output,
    and one feature's failure is logged under its name without suppressing
    the rest.
    """
    candidates: list[Intervention] = []
    for name, feature_config in config.features:
        feature = registry.get(name)
        if feature is None:
            raise UnknownFeature(f"no registered feature named {name!r}")
        try:
            produced = feature.evaluate(transcript, config.agent_author, now_ms, feature_config)
        except Exception:
            logger.exception("feature %r failed to evaluate; skipping this cycle", name)
            continue
        candidates.extend(produced)
    return candidates


def dedupe(candidates: list[Intervention], transcript: Transcript) -> list[Intervention]:
    """Drop candidates whose idempotency key was already posted or repeats in-cycle.

    A key counts as posted when it appears on any agent-origin message in
    the transcript. Among same-cycle duplicates the first wins.
    """
    posted = {
        m.idempotency_key
        for m in transcript.messages
        if m.origin is Origin.AGENT and m.idempotency_key is not None
    }
    kept: list[Intervention] = []
    seen: set[str] = set()
    for candidate in candidates:
        key = candidate.idempotency_key
        if key in posted or key in seen:
            continue
        seen.add(key)
        kept.append(candidate)
    return kept
