"""Operator entry point.

Subcommands: serve (chat service), run (live agent against a room), replay
(deterministic scripted session), report (transcript metrics). Exit codes
are a stable contract: 0 success, 2 environment, 3 configuration,
4 network, 5 input data. Machine-readable output goes to stdout as
newline-delimited JSON; human logs go to stderr.
"""

from __future__ import annotations

import json
import logging
import signal
import sys
import threading
from pathlib import Path

import click

from . import __version__
from .adapter import (
    HttpRoomAdapter,
    PollSettings,
    RealClock,
    parse_replay_script,
    replay_session,
    run_agent,
)
from .engine import AgentConfig, load_agent_config
from .errors import (
    FetchFailed,
    InvalidParameter,
    MalformedConfig,
    MalformedScript,
    PostFailed,
    UnknownFeature,
)
from .features import default_registry
from .metrics import render_table, session_report
from .service import DEFAULT_PORT, ChatService, build_server, default_app_dir
from .transcript import Message, Origin, Transcript, parse_records, write_records

EXIT_ENVIRONMENT = 2
EXIT_CONFIG = 3
EXIT_NETWORK = 4
EXIT_INPUT = 5

logger = logging.getLogger(__name__)


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config(path: str) -> AgentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        _fail(EXIT_CONFIG, f"cannot read config {path}: {exc}")
    try:
        return load_agent_config(text, default_registry())
    except (MalformedConfig, UnknownFeature, InvalidParameter) as exc:
        _fail(EXIT_CONFIG, f"bad config {path}: {exc}")


@click.group()
@click.version_option(version=__version__, prog_name="diplomat")
def main() -> None:
    """Facilitator agents for group text discussions."""
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--port", default=DEFAULT_PORT, show_default=True, envvar="DIPLOMAT_PORT")
@click.option("--data-dir", default="./data", show_default=True, envvar="DIPLOMAT_DATA_DIR")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option(
    "--app-dir",
    default=None,
    envvar="DIPLOMAT_APP_DIR",
    help="Directory of web-client assets served under /app (default: bundled build, if any).",
)
def serve(port: int, data_dir: str, host: str, app_dir: str | None) -> None:
    """Run the chat service until interrupted."""
    data_path = Path(data_dir)
    try:
        data_path.mkdir(parents=True, exist_ok=True)
        probe = data_path / ".write-probe"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        _fail(EXIT_ENVIRONMENT, f"data dir {data_dir} is not writable: {exc}")

    service = ChatService(data_path)
    static_dir = Path(app_dir) if app_dir else default_app_dir()
    try:
        server = build_server(service, host=host, port=port, app_dir=static_dir)
    except OSError as exc:
        service.close()
        _fail(EXIT_ENVIRONMENT, f"cannot bind {host}:{port}: {exc}")

    def handle_sigterm(signum, frame) -> None:
        threading.Thread(target=server.shutdown, daemon=True).start()

    signal.signal(signal.SIGTERM, handle_sigterm)
    click.echo(f"listening on http://{host}:{port} (data dir: {data_path})", err=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        service.close()
        click.echo("shut down cleanly", err=True)


@main.command()
@click.option("--config", "config_path", required=True, help="Agent configuration JSON file.")
@click.option("--room", "room_id", required=True, help="Room id on the chat service.")
@click.option("--service", "service_url", default=f"http://127.0.0.1:{DEFAULT_PORT}", show_default=True)
@click.option("--poll-seconds", default=2.0, show_default=True)
def run(config_path: str, room_id: str, service_url: str, poll_seconds: float) -> None:
    """Run one agent against a live room until interrupted or the session ends."""
    config = _load_config(config_path)
    adapter = HttpRoomAdapter(service_url, room_id, config.agent_author)
    try:
        adapter.fetch_transcript()
    except FetchFailed as exc:
        _fail(EXIT_NETWORK, f"service/room check failed: {exc}")

    run_for_ms = None
    if config.session.duration_min is not None:
        run_for_ms = config.session.duration_min * 60_000

    stop_event = threading.Event()

    def handle_stop(signum, frame) -> None:
        stop_event.set()

    signal.signal(signal.SIGINT, handle_stop)
    signal.signal(signal.SIGTERM, handle_stop)

    try:
        summary = run_agent(
            adapter,
            config,
            default_registry(),
            PollSettings(seconds_per_poll=poll_seconds, run_for_ms=run_for_ms),
            RealClock(),
            stop_event=stop_event,
        )
    except (FetchFailed, PostFailed) as exc:
        _fail(EXIT_NETWORK, f"giving up after repeated adapter failures: {exc}")
    click.echo(json.dumps(summary.to_dict(), ensure_ascii=False))


@main.command()
@click.option("--config", "config_path", required=True, help="Agent configuration JSON file.")
@click.option("--script", "script_path", required=True, help="Replay script (newline-delimited).")
@click.option("--poll-seconds", default=2.0, show_default=True)
def replay(config_path: str, script_path: str, poll_seconds: float) -> None:
    """Replay a scripted session on a virtual clock; print agent messages."""
    config = _load_config(config_path)
    try:
        script_text = Path(script_path).read_text(encoding="utf-8")
        script = parse_replay_script(script_text)
    except OSError as exc:
        _fail(EXIT_INPUT, f"cannot read script {script_path}: {exc}")
    except MalformedScript as exc:
        _fail(EXIT_INPUT, f"bad script {script_path}: {exc}")

    summary, transcript = replay_session(script, config, default_registry(), poll_seconds)
    agent_messages = [m for m in transcript.messages if m.origin is Origin.AGENT]
    sys.stdout.write(write_records(agent_messages))
    logger.info("replay finished: %s", json.dumps(summary.to_dict()))


@main.command()
@click.option("--transcript", "transcript_path", required=True, help="Canonical record file.")
def report(transcript_path: str) -> None:
    """Compute participation metrics and notice outcomes for a transcript."""
    try:
        text = Path(transcript_path).read_text(encoding="utf-8")
        messages = parse_records(text)
    except OSError as exc:
        _fail(EXIT_INPUT, f"cannot read transcript {transcript_path}: {exc}")
    except ValueError as exc:
        _fail(EXIT_INPUT, f"bad transcript {transcript_path}: {exc}")

    transcript = Transcript(
        agent_author=_infer_agent_author(messages), messages=tuple(messages)
    )
    result = session_report(transcript)
    click.echo(json.dumps(result.to_dict(), ensure_ascii=False))
    click.echo(render_table(result), nl=False, err=True)


def _infer_agent_author(messages: list[Message]) -> str:
    for message in messages:
        if message.origin is Origin.AGENT:
            return message.author
    # All-human transcript: any id not already in use keeps invariants happy.
    taken = {m.author for m in messages}
    candidate = "agent"
    while candidate in taken:
        candidate += "-x"
    return candidate


if __name__ == "__main__":
    main()
