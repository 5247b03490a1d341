from __future__ import annotations

import random

import pytest

from diplomat.engine import SessionSpec
from diplomat.features import (
    InformationConfig,
    Link,
    OverspeakingConfig,
    TimingConfig,
    UnderspeakingConfig,
    information_evaluate,
    overspeaking_evaluate,
    timing_evaluate,
    underspeaking_evaluate,
)
from diplomat.transcript import Transcript
from helpers import AGENT, make_transcript
from oracles import (
    oracle_information,
    oracle_overspeaking,
    oracle_timing,
    oracle_underspeaking,
    random_transcript,
)

FIVE_LINKS = tuple(Link(url=f"https://example.org/{i}", note=f"note {i}") for i in range(5))
INFO_CFG = InformationConfig(lull_seconds=120, links=FIVE_LINKS)
SESSION_20 = SessionSpec(start_ms=0, duration_min=20)
TIMING_CFG = TimingConfig(warnings_min=(10, 5, 2), session=SESSION_20)


def test_all_features_quiet_on_empty_transcript() -> None:
    empty = Transcript(agent_author=AGENT)
    assert information_evaluate(empty, AGENT, 10_000_000, INFO_CFG) == []
    assert timing_evaluate(empty, AGENT, 0, TIMING_CFG, SESSION_20) == []
    assert underspeaking_evaluate(empty, AGENT, 0, UnderspeakingConfig()) == []
    assert overspeaking_evaluate(empty, AGENT, 0, OverspeakingConfig()) == []


# --- information -----------------------------------------------------------


def test_information_fires_after_lull() -> None:
    t = make_transcript([("u1", 0)])
    out = information_evaluate(t, AGENT, 121_000, INFO_CFG)
    assert len(out) == 1
    assert out[0].idempotency_key == "information:0"
    assert out[0].body == "Here's a resource that might help: https://example.org/0 — note 0"
    assert out[0].trigger_seq == 0


def test_information_quiet_below_lull() -> None:
    t = make_transcript([("u1", 0)])
    assert information_evaluate(t, AGENT, 119_000, INFO_CFG) == []


def test_information_fires_at_exact_lull_boundary() -> None:
    t = make_transcript([("u1", 0)])
    assert information_evaluate(t, AGENT, 120_000, INFO_CFG) != []


def test_information_stops_when_links_consumed() -> None:
    entries = [("u1", 0)]
    ts = 0
    for i in range(5):
        entries.append((AGENT, ts := ts + 130_000, f"link {i}", "information", f"information:{i}"))
    t = make_transcript(entries)
    now = t.messages[-1].ts_ms + 500_000
    assert oracle_information(t.messages, now, 120, 5) is None  # all 5 consumed
    assert information_evaluate(t, AGENT, now, INFO_CFG) == []


def test_information_offers_next_unconsumed_link() -> None:
    t = make_transcript(
        [("u1", 0), (AGENT, 1000, "link 0", "information", "information:0")]
    )
    now = 1000 + 121_000
    assert oracle_information(t.messages, now, 120, 5) == 1
    out = information_evaluate(t, AGENT, now, INFO_CFG)
    assert [i.idempotency_key for i in out] == ["information:1"]


def test_information_requires_a_human_message() -> None:
    t = make_transcript([(AGENT, 0, "hello", "information", "information:0")])
    assert information_evaluate(t, AGENT, 500_000, INFO_CFG) == []


def test_information_agent_post_resets_lull() -> None:
    t = make_transcript(
        [("u1", 0), (AGENT, 121_000, "link 0", "information", "information:0")]
    )
    # 119 s after the agent's own post: lull not yet reached again.
    assert information_evaluate(t, AGENT, 240_000, INFO_CFG) == []


def test_information_lull_is_monotone_in_gap() -> None:
    t = make_transcript([("u1", 0), ("u2", 30_000)])
    fired_gaps = [
        gap
        for gap in range(0, 400_000, 10_000)
        if information_evaluate(t, AGENT, 30_000 + gap, INFO_CFG)
    ]
    assert fired_gaps == [g for g in range(120_000, 400_000, 10_000)]


def test_information_never_fires_without_links() -> None:
    t = make_transcript([("u1", 0)])
    cfg = InformationConfig(lull_seconds=120, links=())
    assert information_evaluate(t, AGENT, 10_000_000, cfg) == []


# --- timing ----------------------------------------------------------------


def test_timing_warns_at_ten_minutes_remaining() -> None:
    t = make_transcript([("u1", 0)])
    out = timing_evaluate(t, AGENT, 600_000, TIMING_CFG, SESSION_20)
    assert len(out) == 1
    assert out[0].body == "10 minutes remaining."
    assert out[0].idempotency_key == "timing:10"


def test_timing_quiet_before_threshold() -> None:
    t = make_transcript([("u1", 0)])
    assert timing_evaluate(t, AGENT, 599_000, TIMING_CFG, SESSION_20) == []


def test_timing_emits_only_tightest_warning_after_poll_gap() -> None:
    # Poll ticks of a scripted clock: 9 minutes elapsed, then a jump to 16.
    t = make_transcript([("u1", 0)])
    ticks = [540_000, 960_000]
    expected = [oracle_timing(t.messages, now, (10, 5, 2), 0, 20) for now in ticks]
    assert expected == [None, 5]  # frozen from the oracle: 10 is stale, 2 not yet due
    assert timing_evaluate(t, AGENT, 540_000, TIMING_CFG, SESSION_20) == []
    out = timing_evaluate(t, AGENT, 960_000, TIMING_CFG, SESSION_20)
    assert [i.body for i in out] == ["5 minutes remaining."]
    assert [i.idempotency_key for i in out] == ["timing:5"]


def test_timing_quiet_after_session_end() -> None:
    t = make_transcript([("u1", 0)])
    assert timing_evaluate(t, AGENT, 1_200_000, TIMING_CFG, SESSION_20) == []
    assert timing_evaluate(t, AGENT, 1_500_000, TIMING_CFG, SESSION_20) == []


def test_timing_needs_session_duration() -> None:
    t = make_transcript([("u1", 0)])
    session = SessionSpec(start_ms=0, duration_min=None)
    cfg = TimingConfig(warnings_min=(10, 5, 2), session=session)
    assert timing_evaluate(t, AGENT, 600_000, cfg, session) == []


def test_timing_anchors_on_first_human_message_when_start_unset() -> None:
    session = SessionSpec(start_ms=None, duration_min=20)
    cfg = TimingConfig(warnings_min=(10, 5, 2), session=session)
    t = make_transcript([("u1", 30_000)])
    # Session runs 30_000 .. 1_230_000; ten-minute mark at 630_000.
    assert timing_evaluate(t, AGENT, 600_000, cfg, session) == []
    out = timing_evaluate(t, AGENT, 630_000, cfg, session)
    assert [i.idempotency_key for i in out] == ["timing:10"]


def test_timing_no_anchor_without_humans_or_start() -> None:
    session = SessionSpec(start_ms=None, duration_min=20)
    cfg = TimingConfig(warnings_min=(10, 5, 2), session=session)
    assert timing_evaluate(Transcript(agent_author=AGENT), AGENT, 0, cfg, session) == []


# --- underspeaking -----------------------------------------------------------


def _quiet_author_script():
    # u1 speaks at seq 4, then eight messages by others.
    entries = [("u2", 0), ("u3", 10), ("u2", 20), ("u3", 30), ("u1", 40)]
    ts = 40
    for i in range(8):
        entries.append(("u2" if i % 2 == 0 else "u3", ts := ts + 10))
    return entries


def test_underspeaking_fires_after_eight_messages_by_others() -> None:
    t = make_transcript(_quiet_author_script())
    assert oracle_underspeaking(t.messages, 8) == {"u1"}
    out = underspeaking_evaluate(t, AGENT, 0, UnderspeakingConfig(window=8))
    assert [i.idempotency_key for i in out] == ["underspeaking:u1:4"]
    assert out[0].body == "@u1, we haven't heard from you in a while — what do you think?"


def test_underspeaking_ignores_agent_messages_in_count() -> None:
    entries = [("u1", 0)]
    ts = 0
    for i in range(7):
        entries.append(("u2", ts := ts + 10))
        if i < 3:
            entries.append((AGENT, ts := ts + 10, "notice", "timing", f"timing:{i}"))
    t = make_transcript(entries)
    out = underspeaking_evaluate(t, AGENT, 0, UnderspeakingConfig(window=8))
    assert all(i.idempotency_key != "underspeaking:u1:0" for i in out)


def test_underspeaking_does_not_renotify_while_author_stays_silent() -> None:
    entries = _quiet_author_script()
    ts = entries[-1][1]
    entries.append((AGENT, ts := ts + 10, "nudge", "underspeaking", "underspeaking:u1:4"))
    for i in range(20):
        entries.append(("u2" if i % 2 == 0 else "u3", ts := ts + 10))
    t = make_transcript(entries)
    assert oracle_underspeaking(t.messages, 8) == set()  # frozen: notice suppresses
    out = underspeaking_evaluate(t, AGENT, 0, UnderspeakingConfig(window=8))
    assert [i for i in out if i.idempotency_key.startswith("underspeaking:u1:")] == []


def test_underspeaking_renotifies_after_author_speaks_again() -> None:
    entries = _quiet_author_script()
    ts = entries[-1][1]
    entries.append((AGENT, ts := ts + 10, "nudge", "underspeaking", "underspeaking:u1:4"))
    entries.append(("u1", ts := ts + 10))  # u1 answers; new episode starts at this seq
    u1_seq = len(entries) - 1
    for i in range(8):
        entries.append(("u2" if i % 2 == 0 else "u3", ts := ts + 10))
    t = make_transcript(entries)
    out = underspeaking_evaluate(t, AGENT, 0, UnderspeakingConfig(window=8))
    assert f"underspeaking:u1:{u1_seq}" in [i.idempotency_key for i in out]


# --- overspeaking ------------------------------------------------------------


def test_overspeaking_fires_on_five_of_eight() -> None:
    script = ["u1", "u2", "u1", "u3", "u1", "u1", "u2", "u1"]
    t = make_transcript([(a, i * 10) for i, a in enumerate(script)])
    assert oracle_overspeaking(t.messages, 8, 0.5) == {"u1"}
    out = overspeaking_evaluate(t, AGENT, 0, OverspeakingConfig(window=8, share_threshold=0.5))
    assert [i.idempotency_key for i in out] == ["overspeaking:u1:7"]
    assert out[0].body == "@u1, let's make space for others to weigh in."


def test_overspeaking_exactly_half_is_fine() -> None:
    script = ["u1", "u2", "u1", "u3", "u1", "u2", "u3", "u1"]
    t = make_transcript([(a, i * 10) for i, a in enumerate(script)])
    assert oracle_overspeaking(t.messages, 8, 0.5) == set()
    assert overspeaking_evaluate(t, AGENT, 0, OverspeakingConfig()) == []


def test_overspeaking_needs_a_full_window() -> None:
    t = make_transcript([("u1", i * 10) for i in range(7)])
    assert overspeaking_evaluate(t, AGENT, 0, OverspeakingConfig(window=8)) == []


def test_overspeaking_suppressed_while_notice_inside_window_span() -> None:
    script = ["u1", "u2", "u1", "u3", "u1", "u1", "u2", "u1"]
    entries = [(a, i * 10) for i, a in enumerate(script)]
    entries.append((AGENT, 80, "ease up", "overspeaking", "overspeaking:u1:7"))
    entries.append(("u1", 90))  # window slides by one; the notice is inside its span
    t = make_transcript(entries)
    assert oracle_overspeaking(t.messages, 8, 0.5) == set()
    assert overspeaking_evaluate(t, AGENT, 0, OverspeakingConfig()) == []


def test_overspeaking_new_episode_after_window_slides_past_notice() -> None:
    script = ["u1", "u2", "u1", "u3", "u1", "u1", "u2", "u1"]
    entries = [(a, i * 10) for i, a in enumerate(script)]
    entries.append((AGENT, 80, "ease up", "overspeaking", "overspeaking:u1:7"))
    ts = 90
    for i in range(8):  # a fresh window: u1 takes 5 of these 8
        entries.append(("u1" if i % 2 == 0 or i == 7 else "u2", ts + i * 10))
    t = make_transcript(entries)
    assert oracle_overspeaking(t.messages, 8, 0.5) == {"u1"}
    out = overspeaking_evaluate(t, AGENT, 0, OverspeakingConfig())
    last_seq = t.messages[-1].seq
    assert [i.idempotency_key for i in out] == [f"overspeaking:u1:{last_seq}"]


def test_overspeaking_never_fires_at_or_below_ceiling() -> None:
    # count <= ceil(window * threshold) can never exceed the share threshold
    rng = random.Random(7)
    cfg = OverspeakingConfig(window=8, share_threshold=0.5)
    import math

    ceiling = math.ceil(cfg.window * cfg.share_threshold)
    for _ in range(50):
        t = random_transcript(rng, max_messages=60)
        out = overspeaking_evaluate(t, AGENT, 10**9, cfg)
        window = t.human_window(cfg.window)
        for notice in out:
            author = notice.idempotency_key.split(":")[1]
            count = sum(1 for m in window if m.author == author)
            assert count > ceiling


# --- randomized oracle agreement (small; the acceptance suite runs the big one) ---


@pytest.mark.parametrize("seed", range(5))
def test_random_transcripts_agree_with_oracles(seed: int) -> None:
    rng = random.Random(seed)
    for _ in range(40):
        t = random_transcript(rng, max_messages=80)
        now = (t.messages[-1].ts_ms if t.messages else 0) + rng.randint(0, 300_000)
        fired = {i.idempotency_key for i in information_evaluate(t, AGENT, now, INFO_CFG)}
        expected_link = oracle_information(t.messages, now, 120, 5)
        assert fired == ({f"information:{expected_link}"} if expected_link is not None else set())

        out = underspeaking_evaluate(t, AGENT, now, UnderspeakingConfig(window=8))
        assert {i.body.split(",")[0][1:] for i in out} == oracle_underspeaking(t.messages, 8)

        out = overspeaking_evaluate(t, AGENT, now, OverspeakingConfig(window=8, share_threshold=0.5))
        assert {i.body.split(",")[0][1:] for i in out} == oracle_overspeaking(t.messages, 8, 0.5)
