"""Shared test builders."""

from __future__ import annotations

from diplomat.transcript import Origin, Transcript

AGENT = "bot-1"


def make_transcript(entries, agent_author=AGENT) -> Transcript:
    """Build a transcript from compact entries.

    Human entry: (author, ts_ms) or (author, ts_ms, body).
    Agent entry: (author, ts_ms, body, feature_tag, idempotency_key).
    """
    transcript = Transcript(agent_author=agent_author)
    for entry in entries:
        if len(entry) == 2:
            author, ts_ms = entry
            body = f"m{len(transcript)}"
            tag = key = None
        elif len(entry) == 3:
            author, ts_ms, body = entry
            tag = key = None
        else:
            author, ts_ms, body, tag, key = entry
        transcript = transcript.append(
            body=body,
            author=author,
            ts_ms=ts_ms,
            origin=Origin.AGENT if author == agent_author else Origin.HUMAN,
            feature_tag=tag,
            idempotency_key=key,
        )
    return transcript
