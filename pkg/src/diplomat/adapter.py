"""Chat-service integration boundary and the agent poll loop.

An adapter fetches the entire room history and posts interventions; the
loop runs fetch -> evaluate -> dedupe -> post once per tick, strictly
sequentially. Two adapters ship in-repo: one speaking the local chat
service's wire protocol and a deterministic replay double driven by a
virtual clock. Integrating any other chat service means implementing
ChatAdapter for it.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import requests

from .engine import AgentConfig, Feature, Intervention, dedupe, evaluate_all
from .errors import FetchFailed, MalformedScript, PostFailed
from .transcript import AuthorId, Message, Origin, Transcript

logger = logging.getLogger(__name__)


class ChatAdapter(Protocol):
    """What the poll loop needs from a chat service.

    fetch_transcript returns the full history on every call; incremental
    sync, if any, is an adapter-internal optimization. post_interventions
    appends in the given order and returns the stored messages with their
    assigned seq and timestamps, echoing feature_tag and idempotency_key.
    """

    def fetch_transcript(self) -> Transcript: ...

    def post_interventions(self, interventions: Sequence[Intervention]) -> list[Message]: ...


class Clock(Protocol):
    def now_ms(self) -> int: ...

    def sleep(self, seconds: float) -> None: ...


class RealClock:
    def now_ms(self) -> int:
        return int(time.time() * 1000)

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class VirtualClock:
    """Deterministic clock: sleep advances time instead of waiting."""

    def __init__(self, start_ms: int = 0):
        self._now_ms = start_ms

    def now_ms(self) -> int:
        return self._now_ms

    def sleep(self, seconds: float) -> None:
        self._now_ms += round(seconds * 1000)


@dataclass(frozen=True)
class PollSettings:
    """Poll cadence and stop rule.

    run_for_ms=None polls forever (until an external stop event);
    run_for_ms=0 runs zero cycles.
    """

    seconds_per_poll: float = 2.0
    run_for_ms: int | None = None

    def __post_init__(self) -> None:
        if self.seconds_per_poll <= 0:
            raise ValueError("seconds_per_poll must be positive")


@dataclass
class SessionSummary:
    """What a finished agent run did."""

    cycles: int = 0
    posted_by_feature: dict[str, int] = field(default_factory=dict)
    posted_total: int = 0
    failed_cycles: int = 0

    def to_dict(self) -> dict:
        return {
            "cycles": self.cycles,
            "posted_by_feature": dict(sorted(self.posted_by_feature.items())),
            "posted_total": self.posted_total,
            "failed_cycles": self.failed_cycles,
        }


def run_poll_cycle(
    adapter: ChatAdapter,
    config: AgentConfig,
    registry: dict[str, Feature],
    now_ms: int,
) -> list[Message]:
    """One fetch -> evaluate -> dedupe -> post iteration.

    The post is skipped entirely when nothing is due. FetchFailed and
    PostFailed abort the cycle; retrying next tick is safe because
    idempotency keys make re-posting harmless.
    """
    transcript = adapter.fetch_transcript()
    candidates = evaluate_all(config, registry, transcript, now_ms)
    ready = dedupe(candidates, transcript)
    if not ready:
        return []
    return adapter.post_interventions(ready)


def run_agent(
    adapter: ChatAdapter,
    config: AgentConfig,
    registry: dict[str, Feature],
    settings: PollSettings,
    clock: Clock,
    stop_event: threading.Event | None = None,
    max_consecutive_failures: int = 5,
) -> SessionSummary:
    """Run poll cycles every seconds_per_poll until the stop condition.

    Cycles are strictly sequential; a cycle's post completes before the
    next fetch begins. Transient adapter failures are logged and retried
    next tick; after max_consecutive_failures in a row the last error is
    re-raised.
    """
    start_ms = clock.now_ms()
    posted: Counter = Counter()
    summary = SessionSummary()
    consecutive_failures = 0
    while True:
        if settings.run_for_ms is not None and clock.now_ms() - start_ms >= settings.run_for_ms:
            break
        if stop_event is not None and stop_event.is_set():
            break
        try:
            messages = run_poll_cycle(adapter, config, registry, clock.now_ms())
        except (FetchFailed, PostFailed) as exc:
            summary.failed_cycles += 1
            consecutive_failures += 1
            logger.warning("poll cycle failed (%d in a row): %s", consecutive_failures, exc)
            if consecutive_failures >= max_consecutive_failures:
                raise
        else:
            consecutive_failures = 0
            for message in messages:
                posted[message.feature_tag] += 1
                summary.posted_total += 1
        summary.cycles += 1
        clock.sleep(settings.seconds_per_poll)
    summary.posted_by_feature = dict(posted)
    return summary


# --- replay adapter ----------------------------------------------------------


@dataclass(frozen=True)
class ScriptEvent:
    at_ms: int
    author: str
    body: str


def parse_replay_script(text: str) -> list[ScriptEvent]:
    """Parse a newline-delimited replay script.

    Records are {"at_ms": int, "author": str, "body": str} with at_ms
    non-decreasing, relative to virtual session start. Raises
    MalformedScript naming the offending line.
    """
    events: list[ScriptEvent] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedScript(f"line {lineno}: not valid JSON: {exc}") from exc
        if not isinstance(record, dict) or set(record) != {"at_ms", "author", "body"}:
            raise MalformedScript(f"line {lineno}: record must be {{at_ms, author, body}}")
        at_ms, author, body = record["at_ms"], record["author"], record["body"]
        if not isinstance(at_ms, int) or isinstance(at_ms, bool) or at_ms < 0:
            raise MalformedScript(f"line {lineno}: at_ms must be a non-negative integer")
        if not isinstance(author, str) or not author:
            raise MalformedScript(f"line {lineno}: author must be a non-empty string")
        if not isinstance(body, str) or not body.strip():
            raise MalformedScript(f"line {lineno}: body must be a non-empty string")
        if events and at_ms < events[-1].at_ms:
            raise MalformedScript(f"line {lineno}: at_ms decreases ({at_ms} < {events[-1].at_ms})")
        events.append(ScriptEvent(at_ms=at_ms, author=author, body=body))
    return events


class ReplayAdapter:
    """Deterministic adapter double for scripted sessions.

    Scripted human messages become visible as the shared virtual clock
    advances; agent posts land on the same timeline at the current virtual
    time. Repeated runs over the same script and config produce identical
    transcripts byte for byte.
    """

    def __init__(self, script: Sequence[ScriptEvent], clock: Clock, agent_author: AuthorId):
        self._pending = list(script)
        self._clock = clock
        self._transcript = Transcript(agent_author=agent_author)

    @property
    def transcript(self) -> Transcript:
        """Current timeline including messages not yet released to fetch."""
        return self._transcript

    def fetch_transcript(self) -> Transcript:
        now = self._clock.now_ms()
        while self._pending and self._pending[0].at_ms <= now:
            event = self._pending.pop(0)
            self._transcript = self._transcript.append(
                body=event.body,
                author=event.author,
                ts_ms=event.at_ms,
                origin=Origin.HUMAN,
            )
        return self._transcript

    def post_interventions(self, interventions: Sequence[Intervention]) -> list[Message]:
        now = self._clock.now_ms()
        posted = []
        for item in interventions:
            self._transcript = self._transcript.append(
                body=item.body,
                author=self._transcript.agent_author,
                ts_ms=now,
                origin=Origin.AGENT,
                feature_tag=item.feature_tag,
                idempotency_key=item.idempotency_key,
            )
            posted.append(self._transcript.messages[-1])
        return posted


def replay_horizon_ms(script: Sequence[ScriptEvent], config: AgentConfig) -> int:
    """Virtual time a replay must cover: the script plus any timed session."""
    horizon = script[-1].at_ms if script else 0
    if config.session.duration_min is not None:
        anchor = config.session.start_ms
        if anchor is None and script:
            anchor = script[0].at_ms
        if anchor is not None:
            horizon = max(horizon, anchor + config.session.duration_min * 60_000)
    return horizon


def replay_session(
    script: Sequence[ScriptEvent],
    config: AgentConfig,
    registry: dict[str, Feature],
    seconds_per_poll: float = 2.0,
) -> tuple[SessionSummary, Transcript]:
    """Run a whole scripted session on a virtual clock.

    One extra tick past the horizon guarantees the tail of the script is
    observed by at least one cycle.
    """
    clock = VirtualClock(0)
    adapter = ReplayAdapter(script, clock, config.agent_author)
    poll_ms = round(seconds_per_poll * 1000)
    settings = PollSettings(
        seconds_per_poll=seconds_per_poll,
        run_for_ms=replay_horizon_ms(script, config) + poll_ms,
    )
    summary = run_agent(adapter, config, registry, settings, clock)
    adapter.fetch_transcript()  # release any events at the very horizon
    return summary, adapter.transcript


# --- chat service adapter ------------------------------------------------------


class HttpRoomAdapter:
    """Adapter for one room of the local chat service's HTTP+JSON protocol."""

    def __init__(
        self,
        service_url: str,
        room_id: str,
        agent_author: AuthorId,
        timeout_s: float = 10.0,
    ):
        self._base = service_url.rstrip("/")
        self._room_id = room_id
        self._agent_author = agent_author
        self._timeout_s = timeout_s
        self._session = requests.Session()

    def fetch_transcript(self) -> Transcript:
        url = f"{self._base}/rooms/{self._room_id}/messages"
        try:
            response = self._session.get(url, params={"after_seq": -1}, timeout=self._timeout_s)
        except requests.RequestException as exc:
            raise FetchFailed(f"GET {url}: {exc}") from exc
        if response.status_code != 200:
            raise FetchFailed(f"GET {url}: HTTP {response.status_code}: {response.text[:200]}")
        try:
            records = response.json()
            messages = tuple(Message.from_record(r) for r in records)
            return Transcript(agent_author=self._agent_author, messages=messages)
        except (ValueError, KeyError, TypeError) as exc:
            raise FetchFailed(f"GET {url}: bad payload: {exc}") from exc

    def post_interventions(self, interventions: Sequence[Intervention]) -> list[Message]:
        url = f"{self._base}/rooms/{self._room_id}/messages"
        posted = []
        for item in interventions:
            payload = {
                "author": self._agent_author,
                "body": item.body,
                "origin": "agent",
                "feature_tag": item.feature_tag,
                "idempotency_key": item.idempotency_key,
            }
            try:
                response = self._session.post(url, json=payload, timeout=self._timeout_s)
            except requests.RequestException as exc:
                raise PostFailed(f"POST {url}: {exc}") from exc
            if response.status_code != 201:
                raise PostFailed(f"POST {url}: HTTP {response.status_code}: {response.text[:200]}")
            try:
                posted.append(Message.from_record(response.json()))
            except (ValueError, KeyError, TypeError) as exc:
                raise PostFailed(f"POST {url}: bad response payload: {exc}") from exc
        return posted
