"""Exception types shared across the package.

Kept in one module so the CLI can map them onto its exit-code contract
without importing every subsystem.
"""


class DiplomatError(Exception):
    """Base class for all errors raised by this package."""


# --- transcript ---------------------------------------------------------


class OutOfOrderTimestamp(DiplomatError):
    """Appended message is older than the transcript tail."""


class EmptyBody(DiplomatError):
    """Message body is empty after trimming whitespace."""


# --- agent configuration -------------------------------------------------


class MalformedConfig(DiplomatError):
    """Agent configuration document cannot be parsed or has a bad shape."""


class UnknownFeature(DiplomatError):
    """Configuration names a feature with no registered implementation."""


class InvalidParameter(DiplomatError):
    """Feature parameter is out of range (e.g. nonpositive window)."""


# --- chat adapters --------------------------------------------------------


class FetchFailed(DiplomatError):
    """Transcript fetch from the chat service failed; retry next cycle."""


class PostFailed(DiplomatError):
    """Posting interventions failed; retry next cycle is safe."""


class MalformedScript(DiplomatError):
    """Replay script file is not well-formed."""


# --- chat service ---------------------------------------------------------


class RoomExists(DiplomatError):
    """Room id is already taken."""


class InvalidRoomId(DiplomatError):
    """Room id is empty or not url-safe."""


class NoSuchRoom(DiplomatError):
    """Room id does not exist."""


class NotJoined(DiplomatError):
    """Author has not joined the room."""


class CorruptLog(DiplomatError):
    """Persisted room log is corrupted somewhere other than the tail."""
