"""The four builtin intervention rules.

Each rule is a pure function from (transcript, agent author, now, config)
to intervention candidates, wrapped in a Feature subclass so the engine can
parse its config block and dispatch to it. All message-count rules count
human messages only; the agent's own chatter never feeds its triggers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Mapping

from .engine import Feature, Intervention, SessionSpec
from .errors import InvalidParameter, MalformedConfig
from .transcript import AuthorId, Message, Origin, Transcript, author_share

MS_PER_MIN = 60_000

INFORMATION_BODY = "Here's a resource that might help: {url} — {note}"
TIMING_BODY = "{minutes} minutes remaining."
UNDERSPEAKING_BODY = "@{author}, we haven't heard from you in a while — what do you think?"
OVERSPEAKING_BODY = "@{author}, let's make space for others to weigh in."

_KEY_SEQ_RE = re.compile(r":(\d+)$")


def notice_target(message: Message, feature_tag: str) -> AuthorId | None:
    """Author targeted by an under/overspeaking notice, parsed from its key.

    Keys look like "<tag>:<author>:<seq>"; the author id itself may contain
    colons, so the trailing seq is stripped first.
    """
    if message.feature_tag != feature_tag or message.idempotency_key is None:
        return None
    prefix = feature_tag + ":"
    if not message.idempotency_key.startswith(prefix):
        return None
    rest = message.idempotency_key[len(prefix):]
    match = _KEY_SEQ_RE.search(rest)
    if match is None:
        return None
    return rest[: match.start()] or None


def _trigger_seq(transcript: Transcript) -> int:
    return transcript.messages[-1].seq if transcript.messages else -1


def _require_int(block: Mapping[str, Any], key: str, default: int, minimum: int) -> int:
    value = block.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool):
        raise InvalidParameter(f"{key} must be an integer, got {value!r}")
    if value < minimum:
        raise InvalidParameter(f"{key} must be >= {minimum}, got {value}")
    return value


# --- information -----------------------------------------------------------


@dataclass(frozen=True)
class Link:
    url: str
    note: str


@dataclass(frozen=True)
class InformationConfig:
    lull_seconds: int = 120
    links: tuple[Link, ...] = ()


def information_evaluate(
    transcript: Transcript,
    agent_author: AuthorId,
    now_ms: int,
    cfg: InformationConfig,
) -> list[Intervention]:
    """Offer the next unconsumed link after a lull in the conversation.

    The lull is measured against the last message of any origin, so a
    posted link resets the timer instead of triggering a burst. A link
    counts as consumed once an information-tagged agent message exists.
    """
    if not any(m.origin is Origin.HUMAN for m in transcript.messages):
        return []
    last_ts = transcript.last_activity(humans_only=False)
    assert last_ts is not None
    if now_ms - last_ts < cfg.lull_seconds * 1000:
        return []
    consumed = len(transcript.agent_messages("information"))
    if consumed >= len(cfg.links):
        return []
    link = cfg.links[consumed]
    return [
        Intervention(
            body=INFORMATION_BODY.format(url=link.url, note=link.note),
            feature_tag="information",
            idempotency_key=f"information:{consumed}",
            trigger_seq=_trigger_seq(transcript),
        )
    ]


class InformationFeature(Feature):
    name = "information"

    def parse_config(self, raw: Mapping[str, Any], session: SessionSpec) -> InformationConfig:
        unknown = set(raw) - {"lull_seconds", "links"}
        if unknown:
            raise MalformedConfig(f"information: unknown keys {sorted(unknown)}")
        lull_seconds = _require_int(raw, "lull_seconds", default=120, minimum=1)
        raw_links = raw.get("links", [])
        if not isinstance(raw_links, list):
            raise MalformedConfig("information.links must be a list")
        links = []
        for i, item in enumerate(raw_links):
            if not isinstance(item, dict) or set(item) != {"url", "note"}:
                raise MalformedConfig(f"information.links[{i}] must be {{url, note}}")
            url, note = item["url"], item["note"]
            if not isinstance(url, str) or not url:
                raise MalformedConfig(f"information.links[{i}].url must be a non-empty string")
            if not isinstance(note, str):
                raise MalformedConfig(f"information.links[{i}].note must be a string")
            links.append(Link(url=url, note=note))
        return InformationConfig(lull_seconds=lull_seconds, links=tuple(links))

    def evaluate(self, transcript, agent_author, now_ms, config):
        return information_evaluate(transcript, agent_author, now_ms, config)


# --- timing ----------------------------------------------------------------


@dataclass(frozen=True)
class TimingConfig:
    warnings_min: tuple[int, ...] = (10, 5, 2)
    session: SessionSpec = SessionSpec()


def timing_evaluate(
    transcript: Transcript,
    agent_author: AuthorId,
    now_ms: int,
    cfg: TimingConfig,
    session: SessionSpec,
) -> list[Intervention]:
    """Warn once per configured threshold as the session runs down.

    The session is anchored at session.start_ms, falling back to the first
    human message. Per cycle only the tightest crossed threshold is
    produced, so after a long poll gap stale warnings are skipped instead
    of posted in a burst; once-ever delivery comes from engine dedupe.
    """
    if session.duration_min is None:
        return []
    start_ms = session.start_ms
    if start_ms is None:
        for m in transcript.messages:
            if m.origin is Origin.HUMAN:
                start_ms = m.ts_ms
                break
        else:
            return []
    remaining_ms = start_ms + session.duration_min * MS_PER_MIN - now_ms
    if remaining_ms <= 0:
        return []
    crossed = [w for w in cfg.warnings_min if remaining_ms <= w * MS_PER_MIN]
    if not crossed:
        return []
    tightest = min(crossed)
    return [
        Intervention(
            body=TIMING_BODY.format(minutes=tightest),
            feature_tag="timing",
            idempotency_key=f"timing:{tightest}",
            trigger_seq=_trigger_seq(transcript),
        )
    ]


class TimingFeature(Feature):
    name = "timing"

    def parse_config(self, raw: Mapping[str, Any], session: SessionSpec) -> TimingConfig:
        unknown = set(raw) - {"warnings_min"}
        if unknown:
            raise MalformedConfig(f"timing: unknown keys {sorted(unknown)}")
        raw_warnings = raw.get("warnings_min", [10, 5, 2])
        if not isinstance(raw_warnings, list) or not raw_warnings:
            raise MalformedConfig("timing.warnings_min must be a non-empty list")
        warnings = []
        for value in raw_warnings:
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise InvalidParameter(f"timing warning must be a positive integer, got {value!r}")
            warnings.append(value)
        if any(a <= b for a, b in zip(warnings, warnings[1:])):
            raise InvalidParameter("timing.warnings_min must be strictly decreasing")
        if session.duration_min is not None and warnings[0] >= session.duration_min:
            raise InvalidParameter(
                f"timing warnings must be shorter than the {session.duration_min}-minute session"
            )
        return TimingConfig(warnings_min=tuple(warnings), session=session)

    def evaluate(self, transcript, agent_author, now_ms, config):
        return timing_evaluate(transcript, agent_author, now_ms, config, config.session)


# --- underspeaking -----------------------------------------------------------


@dataclass(frozen=True)
class UnderspeakingConfig:
    window: int = 8


def underspeaking_evaluate(
    transcript: Transcript,
    agent_author: AuthorId,
    now_ms: int,
    cfg: UnderspeakingConfig,
) -> list[Intervention]:
    """Nudge participants who went quiet while the conversation moved on.

    Fires for author A once `window` human messages by others have passed
    since A's last message, unless A was already nudged after that message.
    Authors who never spoke are invisible: the rule is anchored to a last
    message.
    """
    humans = [m for m in transcript.messages if m.origin is Origin.HUMAN]
    last_seq: dict[AuthorId, int] = {}
    for m in humans:
        last_seq[m.author] = m.seq

    noticed_after: dict[AuthorId, int] = {}
    for m in transcript.messages:
        target = notice_target(m, "underspeaking")
        if target is not None:
            noticed_after[target] = max(noticed_after.get(target, -1), m.seq)

    out = []
    for author, seq in sorted(last_seq.items(), key=lambda item: item[1]):
        since = sum(1 for m in humans if m.seq > seq)
        if since < cfg.window:
            continue
        if noticed_after.get(author, -1) > seq:
            continue
        out.append(
            Intervention(
                body=UNDERSPEAKING_BODY.format(author=author),
                feature_tag="underspeaking",
                idempotency_key=f"underspeaking:{author}:{seq}",
                trigger_seq=_trigger_seq(transcript),
            )
        )
    return out


class UnderspeakingFeature(Feature):
    name = "underspeaking"

    def parse_config(self, raw: Mapping[str, Any], session: SessionSpec) -> UnderspeakingConfig:
        unknown = set(raw) - {"window"}
        if unknown:
            raise MalformedConfig(f"underspeaking: unknown keys {sorted(unknown)}")
        return UnderspeakingConfig(window=_require_int(raw, "window", default=8, minimum=1))

    def evaluate(self, transcript, agent_author, now_ms, config):
        return underspeaking_evaluate(transcript, agent_author, now_ms, config)


# --- overspeaking ------------------------------------------------------------


@dataclass(frozen=True)
class OverspeakingConfig:
    window: int = 8
    share_threshold: float = 0.5


def overspeaking_evaluate(
    transcript: Transcript,
    agent_author: AuthorId,
    now_ms: int,
    cfg: OverspeakingConfig,
) -> list[Intervention]:
    """Notify authors who dominate the sliding window of recent human messages.

    Requires a full window; the share comparison is strict (exactly half is
    fine). A prior notice for the same author suppresses re-notification
    while it still lies inside the current window's transcript span.
    """
    window = transcript.human_window(cfg.window)
    if len(window) < cfg.window:
        return []
    span_start, span_end = window[0].seq, window[-1].seq

    noticed_in_span = set()
    for m in transcript.messages:
        if span_start <= m.seq <= span_end:
            target = notice_target(m, "overspeaking")
            if target is not None:
                noticed_in_span.add(target)

    out = []
    for author, count in author_share(window).items():
        if count / len(window) <= cfg.share_threshold:
            continue
        if author in noticed_in_span:
            continue
        out.append(
            Intervention(
                body=OVERSPEAKING_BODY.format(author=author),
                feature_tag="overspeaking",
                idempotency_key=f"overspeaking:{author}:{span_end}",
                trigger_seq=_trigger_seq(transcript),
            )
        )
    return out


class OverspeakingFeature(Feature):
    name = "overspeaking"

    def parse_config(self, raw: Mapping[str, Any], session: SessionSpec) -> OverspeakingConfig:
        unknown = set(raw) - {"window", "share_threshold"}
        if unknown:
            raise MalformedConfig(f"overspeaking: unknown keys {sorted(unknown)}")
        window = _require_int(raw, "window", default=8, minimum=2)
        threshold = raw.get("share_threshold", 0.5)
        if isinstance(threshold, bool) or not isinstance(threshold, (int, float)):
            raise InvalidParameter(f"share_threshold must be a number, got {threshold!r}")
        if not 0 < threshold < 1:
            raise InvalidParameter(f"share_threshold must be in (0, 1), got {threshold}")
        return OverspeakingConfig(window=window, share_threshold=float(threshold))

    def evaluate(self, transcript, agent_author, now_ms, config):
        return overspeaking_evaluate(transcript, agent_author, now_ms, config)


def default_registry() -> dict[str, Feature]:
    """The builtin rules, keyed by their config-block names."""
    features = [
        InformationFeature(),
        TimingFeature(),
        UnderspeakingFeature(),
        OverspeakingFeature(),
    ]
    return {f.name: f for f in features}
