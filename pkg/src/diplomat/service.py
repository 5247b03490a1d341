"""Self-hosted multi-room chat service.

Rooms are append-only logs persisted as one newline-delimited record file
each (plus a small membership sidecar), fsynced before a post is
acknowledged. The HTTP layer speaks JSON over a thread-per-connection
server; reads support an optional long-poll wait. Per-room appends are
serialized by a room lock, which makes seq assignment linearizable.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import os
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .errors import (
    CorruptLog,
    EmptyBody,
    InvalidRoomId,
    NoSuchRoom,
    NotJoined,
    RoomExists,
)
from .transcript import AuthorId, Message, Origin

logger = logging.getLogger(__name__)

DEFAULT_PORT = 8437
ROOM_ID_RE = re.compile(r"^[A-Za-z0-9._~-]+$")
MAX_WAIT_MS = 25_000

META_FILE = "meta.json"
LOG_FILE = "log.ndjson"


@dataclass
class _Room:
    room_id: str
    directory: Path
    agent_author: AuthorId | None = None
    participants: dict[AuthorId, str] = field(default_factory=dict)
    messages: list[Message] = field(default_factory=list)
    key_to_seq: dict[str, int] = field(default_factory=dict)
    log_handle: object = None

    def __post_init__(self) -> None:
        self.cond = threading.Condition()


class ChatService:
    """Room state, validation, and durable storage behind the HTTP layer."""

    def __init__(self, data_dir: str | Path):
        self._data_dir = Path(data_dir)
        self._data_dir.mkdir(parents=True, exist_ok=True)
        self._rooms: dict[str, _Room] = {}
        self._rooms_lock = threading.Lock()
        self._recover()

    # -- persistence ---------------------------------------------------

    def _recover(self) -> None:
        """Rebuild all rooms from disk, discarding a torn trailing record."""
        for entry in sorted(self._data_dir.iterdir()) if self._data_dir.exists() else []:
            meta_path = entry / META_FILE
            if not entry.is_dir() or not meta_path.exists():
                continue
            try:
                meta = json.loads(meta_path.read_text(encoding="utf-8"))
            except (json.JSONDecodeError, OSError) as exc:
                raise CorruptLog(f"room {entry.name}: unreadable meta: {exc}") from exc
            room = _Room(
                room_id=meta["room_id"],
                directory=entry,
                agent_author=meta.get("agent_author"),
                participants=dict(meta.get("participants", {})),
            )
            self._load_log(room)
            room.log_handle = open(entry / LOG_FILE, "ab")
            self._rooms[room.room_id] = room
            logger.info("recovered room %r with %d messages", room.room_id, len(room.messages))

    def _load_log(self, room: _Room) -> None:
        log_path = room.directory / LOG_FILE
        if not log_path.exists():
            return
        raw = log_path.read_bytes()
        offset = 0
        lines: list[tuple[int, bytes]] = []  # (byte offset, line without newline)
        while offset < len(raw):
            newline = raw.find(b"\n", offset)
            if newline == -1:
                lines.append((offset, raw[offset:]))
                break
            lines.append((offset, raw[offset:newline]))
            offset = newline + 1
        for index, (byte_offset, line) in enumerate(lines):
            is_last = index == len(lines) - 1
            try:
                record = json.loads(line.decode("utf-8"))
                message = Message.from_record(record)
                if message.seq != index:
                    raise ValueError(f"expected seq {index}, found {message.seq}")
            except Exception as exc:
                if is_last:
                    # Torn trailing write: drop it and truncate so future
                    # appends start on a clean boundary.
                    logger.warning(
                        "room %r: discarding torn trailing record: %s", room.room_id, exc
                    )
                    with open(log_path, "r+b") as handle:
                        handle.truncate(byte_offset)
                    return
                raise CorruptLog(
                    f"room {room.room_id}: corrupt record at seq {index}: {exc}"
                ) from exc
            room.messages.append(message)
            if message.origin is Origin.AGENT and message.idempotency_key:
                room.key_to_seq[message.idempotency_key] = message.seq

    def _write_meta(self, room: _Room) -> None:
        meta = {
            "room_id": room.room_id,
            "agent_author": room.agent_author,
            "participants": room.participants,
        }
        tmp_path = room.directory / (META_FILE + ".tmp")
        with open(tmp_path, "w", encoding="utf-8") as handle:
            json.dump(meta, handle, ensure_ascii=False)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_path, room.directory / META_FILE)

    def _append_record(self, room: _Room, message: Message) -> None:
        line = json.dumps(message.to_record(), ensure_ascii=False, separators=(",", ":"))
        room.log_handle.write(line.encode("utf-8") + b"\n")
        room.log_handle.flush()
        os.fsync(room.log_handle.fileno())

    def close(self) -> None:
        with self._rooms_lock:
            for room in self._rooms.values():
                if room.log_handle is not None:
                    room.log_handle.close()
                    room.log_handle = None

    # -- operations ------------------------------------------------------

    def _room(self, room_id: str) -> _Room:
        with self._rooms_lock:
            room = self._rooms.get(room_id)
        if room is None:
            raise NoSuchRoom(f"no room named {room_id!r}")
        return room

    def create_room(self, room_id: str, agent_author: AuthorId | None = None) -> dict:
        if not room_id or not ROOM_ID_RE.match(room_id):
            raise InvalidRoomId(f"room id must be non-empty and url-safe, got {room_id!r}")
        if agent_author is not None and not agent_author:
            raise InvalidRoomId("agent_author must be non-empty when given")
        with self._rooms_lock:
            if room_id in self._rooms:
                raise RoomExists(f"room {room_id!r} already exists")
            directory = self._data_dir / room_id
            directory.mkdir(parents=True, exist_ok=True)
            room = _Room(room_id=room_id, directory=directory, agent_author=agent_author)
            self._write_meta(room)
            room.log_handle = open(directory / LOG_FILE, "ab")
            self._rooms[room_id] = room
        return {"room_id": room_id, "agent_author": agent_author}

    def join(self, room_id: str, author: AuthorId, display_name: str) -> list[dict]:
        room = self._room(room_id)
        if not author:
            raise ValueError("author must be non-empty")
        if not display_name:
            raise ValueError("display_name must be non-empty")
        with room.cond:
            room.participants[author] = display_name
            self._write_meta(room)
        return self.participants(room_id)

    def participants(self, room_id: str) -> list[dict]:
        room = self._room(room_id)
        with room.cond:
            return [
                {"author": author, "display_name": name}
                for author, name in room.participants.items()
            ]

    def list_rooms(self) -> list[str]:
        with self._rooms_lock:
            return sorted(self._rooms)

    def post_message(
        self,
        room_id: str,
        author: AuthorId,
        body: str,
        origin: Origin,
        feature_tag: str | None = None,
        idempotency_key: str | None = None,
    ) -> Message:
        """Append one message: validated, sequenced, fsynced, then acknowledged.

        A duplicate agent idempotency_key is acknowledged by returning the
        existing message without re-appending (server-side dedupe backstop).
        """
        room = self._room(room_id)
        if not body or not body.strip():
            raise EmptyBody("message body is empty")
        if origin is Origin.AGENT:
            if room.agent_author is None or author != room.agent_author:
                raise ValueError(
                    f"agent posts must come from the room's agent author {room.agent_author!r}"
                )
            if not feature_tag or not idempotency_key:
                raise ValueError("agent posts require feature_tag and idempotency_key")
        else:
            if author == room.agent_author:
                raise ValueError("the agent author cannot post human-origin messages")
            if feature_tag is not None or idempotency_key is not None:
                raise ValueError("human posts must not carry feature_tag or idempotency_key")
        with room.cond:
            if origin is not Origin.AGENT and author not in room.participants:
                raise NotJoined(f"author {author!r} has not joined room {room_id!r}")
            if idempotency_key is not None and idempotency_key in room.key_to_seq:
                return room.messages[room.key_to_seq[idempotency_key]]
            last_ts = room.messages[-1].ts_ms if room.messages else 0
            message = Message(
                seq=len(room.messages),
                author=author,
                body=body,
                ts_ms=max(int(time.time() * 1000), last_ts),
                origin=origin,
                feature_tag=feature_tag,
                idempotency_key=idempotency_key,
            )
            self._append_record(room, message)
            room.messages.append(message)
            if idempotency_key is not None:
                room.key_to_seq[idempotency_key] = message.seq
            room.cond.notify_all()
        return message

    def get_messages(self, room_id: str, after_seq: int = -1, wait_ms: int = 0) -> list[Message]:
        """Messages with seq > after_seq; optionally long-poll for new ones."""
        room = self._room(room_id)
        start = after_seq + 1 if after_seq >= -1 else 0
        deadline = time.monotonic() + min(max(wait_ms, 0), MAX_WAIT_MS) / 1000
        with room.cond:
            while len(room.messages) <= start:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                room.cond.wait(remaining)
            return list(room.messages[start:])


# --- HTTP layer ---------------------------------------------------------


class _RequestHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    service: ChatService = None  # set by build_server
    app_dir: Path | None = None

    _ROOM_MESSAGES = re.compile(r"^/rooms/([^/]+)/messages$")
    _ROOM_JOIN = re.compile(r"^/rooms/([^/]+)/join$")
    _ROOM_PARTICIPANTS = re.compile(r"^/rooms/([^/]+)/participants$")

    def log_message(self, format: str, *args) -> None:  # noqa: A002 - stdlib signature
        logger.debug("%s %s", self.address_string(), format % args)

    def _send_json(self, status: int, payload) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, error: str, detail: str) -> None:
        self._send_json(status, {"error": error, "detail": detail})

    def _read_json_body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b""
        try:
            payload = json.loads(raw.decode("utf-8")) if raw else {}
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ValueError(f"request body is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ValueError("request body must be a JSON object")
        return payload

    def _dispatch(self, handler) -> None:
        try:
            handler()
        except NoSuchRoom as exc:
            self._send_error_json(404, "NoSuchRoom", str(exc))
        except NotJoined as exc:
            self._send_error_json(403, "NotJoined", str(exc))
        except RoomExists as exc:
            self._send_error_json(409, "RoomExists", str(exc))
        except (InvalidRoomId, EmptyBody, ValueError, KeyError, TypeError) as exc:
            self._send_error_json(422, "ValidationError", str(exc))
        except Exception:
            logger.exception("unhandled error serving %s %s", self.command, self.path)
            self._send_error_json(500, "InternalError", "internal server error")

    def do_POST(self) -> None:  # noqa: N802 - stdlib naming
        self._dispatch(self._handle_post)

    def do_GET(self) -> None:  # noqa: N802 - stdlib naming
        self._dispatch(self._handle_get)

    def _handle_post(self) -> None:
        path = urlparse(self.path).path
        if path == "/rooms":
            payload = self._read_json_body()
            meta = self.service.create_room(
                room_id=payload.get("room_id", ""),
                agent_author=payload.get("agent_author"),
            )
            self._send_json(201, meta)
            return
        match = self._ROOM_JOIN.match(path)
        if match:
            payload = self._read_json_body()
            roster = self.service.join(
                room_id=match.group(1),
                author=payload.get("author", ""),
                display_name=payload.get("display_name", ""),
            )
            self._send_json(200, roster)
            return
        match = self._ROOM_MESSAGES.match(path)
        if match:
            payload = self._read_json_body()
            message = self.service.post_message(
                room_id=match.group(1),
                author=payload.get("author", ""),
                body=payload.get("body", ""),
                origin=Origin(payload.get("origin", "human")),
                feature_tag=payload.get("feature_tag"),
                idempotency_key=payload.get("idempotency_key"),
            )
            self._send_json(201, message.to_record())
            return
        self._send_error_json(404, "NotFound", f"no such endpoint: POST {path}")

    def _handle_get(self) -> None:
        parsed = urlparse(self.path)
        path = parsed.path
        if path == "/rooms":
            self._send_json(200, self.service.list_rooms())
            return
        match = self._ROOM_MESSAGES.match(path)
        if match:
            query = parse_qs(parsed.query)
            after_seq = int(query.get("after_seq", ["-1"])[0])
            wait_ms = int(query.get("wait_ms", ["0"])[0])
            messages = self.service.get_messages(match.group(1), after_seq, wait_ms)
            self._send_json(200, [m.to_record() for m in messages])
            return
        match = self._ROOM_PARTICIPANTS.match(path)
        if match:
            self._send_json(200, self.service.participants(match.group(1)))
            return
        if path == "/app" or path.startswith("/app/"):
            self._serve_static(path)
            return
        self._send_error_json(404, "NotFound", f"no such endpoint: GET {path}")

    def _serve_static(self, path: str) -> None:
        if self.app_dir is None:
            self._send_error_json(404, "NotFound", "no web client is bundled on this server")
            return
        relative = path[len("/app"):].lstrip("/") or "index.html"
        root = self.app_dir.resolve()
        target = (root / relative).resolve()
        if root not in target.parents and target != root:
            self._send_error_json(404, "NotFound", "not found")
            return
        if not target.is_file():
            self._send_error_json(404, "NotFound", f"no such asset: {relative}")
            return
        content_type = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def default_app_dir() -> Path | None:
    """Bundled web-client assets, when they have been built."""
    candidate = Path(__file__).parent / "static" / "app"
    return candidate if (candidate / "index.html").exists() else None


def build_server(
    service: ChatService,
    host: str = "127.0.0.1",
    port: int = DEFAULT_PORT,
    app_dir: Path | None = None,
) -> ThreadingHTTPServer:
    """Bind the HTTP server; call serve_forever() on the result to run it."""
    handler = type(
        "BoundRequestHandler",
        (_RequestHandler,),
        {"service": service, "app_dir": app_dir},
    )
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server
