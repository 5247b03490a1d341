"""Canonical data model for chat messages and transcripts.

A transcript is the entire ordered history of a room. Values are immutable
snapshots: appending builds a new transcript, so snapshots can be shared
freely across threads.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import EmptyBody, OutOfOrderTimestamp

# Opaque, non-empty participant identifier, stable within a room.
AuthorId = str


class Origin(str, Enum):
    HUMAN = "human"
    AGENT = "agent"


@dataclass(frozen=True)
class Message:
    """One chat utterance.

    seq is room-local and dense from 0, assigned by the chat service at
    post time. feature_tag and idempotency_key are present exactly when the
    message was produced by the agent.
    """

    seq: int
    author: AuthorId
    body: str
    ts_ms: int
    origin: Origin
    feature_tag: str | None = None
    idempotency_key: str | None = None

    def __post_init__(self) -> None:
        if self.seq < 0:
            raise ValueError(f"seq must be non-negative, got {self.seq}")
        if not self.author:
            raise ValueError("author must be a non-empty string")
        if not self.body.strip():
            raise EmptyBody("message body is empty")
        is_agent = self.origin is Origin.AGENT
        has_meta = self.feature_tag is not None and self.idempotency_key is not None
        if is_agent and not has_meta:
            raise ValueError("agent messages require feature_tag and idempotency_key")
        if not is_agent and (self.feature_tag is not None or self.idempotency_key is not None):
            raise ValueError("human messages must not carry feature_tag or idempotency_key")

    def to_record(self) -> dict:
        """Canonical serialized form used by persistence and the wire protocol."""
        return {
            "seq": self.seq,
            "author": self.author,
            "body": self.body,
            "ts_ms": self.ts_ms,
            "origin": self.origin.value,
            "feature_tag": self.feature_tag,
            "idempotency_key": self.idempotency_key,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "Message":
        return cls(
            seq=record["seq"],
            author=record["author"],
            body=record["body"],
            ts_ms=record["ts_ms"],
            origin=Origin(record["origin"]),
            feature_tag=record.get("feature_tag"),
            idempotency_key=record.get("idempotency_key"),
        )


@dataclass(frozen=True)
class Transcript:
    """Immutable, ordered history of a room's messages.

    Invariants: seq dense from 0, timestamps non-decreasing (ties resolved
    by seq), and origin=agent exactly for messages by agent_author.
    """

    agent_author: AuthorId
    messages: tuple[Message, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.agent_author:
            raise ValueError("agent_author must be a non-empty string")
        prev_ts = None
        for i, msg in enumerate(self.messages):
            if msg.seq != i:
                raise ValueError(f"seq not dense: expected {i}, got {msg.seq}")
            if prev_ts is not None and msg.ts_ms < prev_ts:
                raise OutOfOrderTimestamp(
                    f"timestamp {msg.ts_ms} at seq {msg.seq} precedes {prev_ts}"
                )
            prev_ts = msg.ts_ms
            if (msg.origin is Origin.AGENT) != (msg.author == self.agent_author):
                raise ValueError(
                    f"seq {msg.seq}: origin {msg.origin.value!r} inconsistent with "
                    f"author {msg.author!r} (agent is {self.agent_author!r})"
                )

    def __len__(self) -> int:
        return len(self.messages)

    def append(
        self,
        body: str,
        author: AuthorId,
        ts_ms: int,
        origin: Origin,
        feature_tag: str | None = None,
        idempotency_key: str | None = None,
    ) -> "Transcript":
        """Return a new transcript with one more message at the tail.

        Raises OutOfOrderTimestamp if ts_ms is earlier than the current tail
        (equal timestamps are fine: seq breaks the tie) and EmptyBody for
        whitespace-only bodies.
        """
        if not body.strip():
            raise EmptyBody("message body is empty")
        if self.messages and ts_ms < self.messages[-1].ts_ms:
            raise OutOfOrderTimestamp(
                f"timestamp {ts_ms} precedes tail {self.messages[-1].ts_ms}"
            )
        msg = Message(
            seq=len(self.messages),
            author=author,
            body=body,
            ts_ms=ts_ms,
            origin=origin,
            feature_tag=feature_tag,
            idempotency_key=idempotency_key,
        )
        return Transcript(agent_author=self.agent_author, messages=self.messages + (msg,))

    def human_window(self, n: int) -> list[Message]:
        """The last min(n, available) human-origin messages, in seq order."""
        if n <= 0:
            raise ValueError(f"window size must be positive, got {n}")
        humans = [m for m in self.messages if m.origin is Origin.HUMAN]
        return humans[-n:]

    def last_activity(self, humans_only: bool = False) -> int | None:
        """Timestamp of the most recent matching message, or None."""
        for msg in reversed(self.messages):
            if humans_only and msg.origin is not Origin.HUMAN:
                continue
            return msg.ts_ms
        return None

    def agent_messages(self, feature_tag: str | None = None) -> list[Message]:
        """Agent-origin messages, optionally filtered by feature tag."""
        return [
            m
            for m in self.messages
            if m.origin is Origin.AGENT
            and (feature_tag is None or m.feature_tag == feature_tag)
        ]


def author_share(window: Sequence[Message]) -> dict[AuthorId, int]:
    """Exact per-author message counts over a window; counts sum to its length."""
    return dict(Counter(m.author for m in window))


def write_records(messages: Iterable[Message]) -> str:
    """Serialize messages as newline-delimited canonical records."""
    return "".join(
        json.dumps(m.to_record(), ensure_ascii=False, separators=(",", ":")) + "\n"
        for m in messages
    )


def parse_records(text: str) -> list[Message]:
    """Parse newline-delimited canonical records.

    Raises ValueError naming the 1-based line number of the first bad line.
    """
    messages = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            messages.append(Message.from_record(record))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, EmptyBody) as exc:
            raise ValueError(f"bad message record on line {lineno}: {exc}") from exc
    return messages


def transcript_from_messages(
    messages: Sequence[Message], agent_author: AuthorId
) -> Transcript:
    """Build a validated transcript from already-sequenced messages."""
    return Transcript(agent_author=agent_author, messages=tuple(messages))
