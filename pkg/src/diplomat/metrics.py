"""Post-session analysis of agent interventions.

Measures whether participants behaved as the under/overspeaking notices
asked, using 5-human-message response windows. The information feature has
no mechanical success criterion, so the report only carries a follow-up
activity proxy for it, labeled as such.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .features import notice_target
from .transcript import AuthorId, Message, Origin, Transcript

RESPONSE_WINDOW = 5


@dataclass(frozen=True)
class InterventionOutcome:
    """Whether one notice got the asked-for behavior.

    responded is None when the transcript ended before the response window
    completed and the question is still open; such outcomes never count
    toward rates. response_lag_msgs is the 1-based position of the
    responding message among the human messages after the notice.
    """

    intervention: Message
    target: AuthorId | None
    responded: bool | None
    response_lag_msgs: int | None = None

    def to_dict(self) -> dict:
        return {
            "seq": self.intervention.seq,
            "feature_tag": self.intervention.feature_tag,
            "target": self.target,
            "responded": self.responded,
            "response_lag_msgs": self.response_lag_msgs,
        }


@dataclass(frozen=True)
class SessionReport:
    counts_by_feature: dict[str, int]
    messages_by_author: dict[AuthorId, int]
    underspeak_response_rate: float | None
    overspeak_response_rate: float | None
    outcomes: tuple[InterventionOutcome, ...]
    information_followup_proxy: tuple[dict, ...]

    def to_dict(self) -> dict:
        return {
            "counts_by_feature": dict(sorted(self.counts_by_feature.items())),
            "messages_by_author": dict(sorted(self.messages_by_author.items())),
            "underspeak_response_rate": self.underspeak_response_rate,
            "overspeak_response_rate": self.overspeak_response_rate,
            "outcomes": [o.to_dict() for o in self.outcomes],
            "information_followup_proxy": list(self.information_followup_proxy),
        }


def _humans_after(transcript: Transcript, seq: int) -> list[Message]:
    return [m for m in transcript.messages if m.seq > seq and m.origin is Origin.HUMAN]


def underspeak_outcomes(transcript: Transcript) -> list[InterventionOutcome]:
    """Did each nudged-quiet participant speak within the next 5 human messages?"""
    outcomes = []
    for notice in transcript.agent_messages("underspeaking"):
        target = notice_target(notice, "underspeaking")
        window = _humans_after(transcript, notice.seq)[:RESPONSE_WINDOW]
        responded = False
        lag = None
        for position, message in enumerate(window, start=1):
            if message.author == target:
                responded = True
                lag = position
                break
        outcomes.append(
            InterventionOutcome(
                intervention=notice, target=target, responded=responded, response_lag_msgs=lag
            )
        )
    return outcomes


def overspeak_outcomes(transcript: Transcript) -> list[InterventionOutcome]:
    """Did each dominant speaker stay quiet for the next 5 human messages?

    Speaking inside the window settles the outcome as False immediately; a
    window cut short by the end of the transcript with no violation stays
    undetermined (responded=None) and is excluded from the rate.
    """
    outcomes = []
    for notice in transcript.agent_messages("overspeaking"):
        target = notice_target(notice, "overspeaking")
        window = _humans_after(transcript, notice.seq)[:RESPONSE_WINDOW]
        responded: bool | None
        if any(m.author == target for m in window):
            responded = False
        elif len(window) < RESPONSE_WINDOW:
            responded = None
        else:
            responded = True
        outcomes.append(InterventionOutcome(intervention=notice, target=target, responded=responded))
    return outcomes


def _rate(outcomes: list[InterventionOutcome]) -> float | None:
    determined = [o for o in outcomes if o.responded is not None]
    if not determined:
        return None
    return sum(1 for o in determined if o.responded) / len(determined)


def session_report(transcript: Transcript) -> SessionReport:
    """Aggregate counts and notice outcomes for one transcript."""
    counts_by_feature = Counter(
        m.feature_tag for m in transcript.messages if m.origin is Origin.AGENT
    )
    messages_by_author = Counter(
        m.author for m in transcript.messages if m.origin is Origin.HUMAN
    )
    under = underspeak_outcomes(transcript)
    over = overspeak_outcomes(transcript)
    proxy = tuple(
        {
            "seq": notice.seq,
            "human_messages_within_next_5": len(
                _humans_after(transcript, notice.seq)[:RESPONSE_WINDOW]
            ),
        }
        for notice in transcript.agent_messages("information")
    )
    return SessionReport(
        counts_by_feature=dict(counts_by_feature),
        messages_by_author=dict(messages_by_author),
        underspeak_response_rate=_rate(under),
        overspeak_response_rate=_rate(over),
        outcomes=tuple(sorted(under + over, key=lambda o: o.intervention.seq)),
        information_followup_proxy=proxy,
    )


def render_table(report: SessionReport) -> str:
    """Aligned plain-text rendering of a session report."""
    lines = []

    def section(title: str, rows: list[tuple[str, str]]) -> None:
        lines.append(title)
        if not rows:
            lines.append("  (none)")
            return
        width = max(len(label) for label, _ in rows)
        for label, value in rows:
            lines.append(f"  {label.ljust(width)}  {value}")

    section(
        "interventions by feature",
        [(tag, str(n)) for tag, n in sorted(report.counts_by_feature.items())],
    )
    section(
        "human messages by author",
        [(author, str(n)) for author, n in sorted(report.messages_by_author.items())],
    )

    def fmt_rate(rate: float | None) -> str:
        return "n/a" if rate is None else f"{rate:.2f}"

    section(
        "response rates",
        [
            ("underspeaking", fmt_rate(report.underspeak_response_rate)),
            ("overspeaking", fmt_rate(report.overspeak_response_rate)),
        ],
    )
    section(
        "notice outcomes",
        [
            (
                f"seq {o.intervention.seq} {o.intervention.feature_tag} -> {o.target}",
                "undetermined"
                if o.responded is None
                else ("responded" if o.responded else "no response")
                + (f" (lag {o.response_lag_msgs})" if o.response_lag_msgs else ""),
            )
            for o in report.outcomes
        ],
    )
    section(
        "information follow-up (proxy: human messages within next 5)",
        [
            (f"seq {item['seq']}", str(item["human_messages_within_next_5"]))
            for item in report.information_followup_proxy
        ],
    )
    return "\n".join(lines) + "\n"
