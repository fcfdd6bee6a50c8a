"""Agent-side request plane.

Security-relevant operations are not executed directly; the agent process
builds a trusted operation request and submits it to the plane over a local
stream socket. A request names the session, action, target object, requested
scope, context flags, a per-session strictly increasing sequence number, and
a proposed grant lifetime. The security level field always carries the
"unassessed" sentinel on this side: assessment is the plane's job, and the
plane rejects requests that try to pre-assess themselves.
"""

from __future__ import annotations

import socket
import time
from dataclasses import dataclass
from fnmatch import fnmatchcase

from . import canonical, wire
from .risk import Action, Context

LEVEL_UNASSESSED = "unassessed"

REQUEST_FIELDS = ("sid", "act", "obj", "scope", "ctx", "level", "seq", "ttl")


class RequestError(ValueError):
    pass


class SessionClosed(RequestError):
    pass


class PlaneUnreachable(ConnectionError):
    pass


@dataclass(frozen=True)
class Scope:
    """Requested or approved authority bounds for one operation.

    path_prefixes are logical path prefixes the operation may touch,
    command_patterns are anchored full-argv templates (tokens matched with
    shell-style wildcards), endpoint names the remote endpoint when the
    operation executes off-host.
    """

    path_prefixes: tuple[str, ...] = ()
    command_patterns: tuple[str, ...] = ()
    endpoint: str | None = None

    def __post_init__(self):
        if not self.path_prefixes and not self.command_patterns:
            raise RequestError("scope must name at least one path prefix or command pattern")
        for p in self.path_prefixes:
            if not isinstance(p, str) or not p:
                raise RequestError("scope path prefixes must be non-empty strings")
        for p in self.command_patterns:
            if not isinstance(p, str) or not p:
                raise RequestError("scope command patterns must be non-empty strings")

    def to_wire(self) -> dict:
        doc: dict = {
            "path_prefixes": list(self.path_prefixes),
            "command_patterns": list(self.command_patterns),
        }
        if self.endpoint is not None:
            doc["endpoint"] = self.endpoint
        return doc

    @classmethod
    def from_wire(cls, data) -> "Scope":
        if not isinstance(data, dict):
            raise RequestError("scope must be an object")
        unknown = set(data) - {"path_prefixes", "command_patterns", "endpoint"}
        if unknown:
            raise RequestError(f"unknown scope fields: {sorted(unknown)}")
        endpoint = data.get("endpoint")
        if endpoint is not None and (not isinstance(endpoint, str) or not endpoint):
            raise RequestError("scope endpoint must be a non-empty string")
        return cls(
            path_prefixes=tuple(data.get("path_prefixes", ())),
            command_patterns=tuple(data.get("command_patterns", ())),
            endpoint=endpoint,
        )

    def covers_path(self, path: str) -> bool:
        return any(path_within_prefix(path, p) for p in self.path_prefixes)

    def contains(self, other: "Scope") -> bool:
        """True when every authority in `other` is within this scope."""
        for p in other.path_prefixes:
            if not self.covers_path(p):
                return False
        for c in other.command_patterns:
            if c not in self.command_patterns:
                return False
        if other.endpoint is not None and other.endpoint != self.endpoint:
            return False
        return True


def path_within_prefix(path: str, prefix: str) -> bool:
    """Logical prefix containment: exact match or a path below the prefix."""
    prefix = prefix.rstrip("/") or "/"
    if path == prefix:
        return True
    if prefix == "/":
        return path.startswith("/")
    return path.startswith(prefix + "/")


def match_command(pattern: str, command: str) -> bool:
    """Anchored full-argv template match, shell wildcards token by token."""
    ptoks = pattern.split(" ")
    ctoks = command.split(" ")
    if len(ptoks) != len(ctoks):
        return False
    return all(fnmatchcase(c, p) for p, c in zip(ptoks, ctoks))


@dataclass(frozen=True)
class TrustedOperationRequest:
    sid: str
    act: str
    obj: str
    scope: Scope
    ctx: Context
    level: str
    seq: int
    ttl: int

    def to_wire(self) -> dict:
        return {
            "sid": self.sid,
            "act": self.act,
            "obj": self.obj,
            "scope": self.scope.to_wire(),
            "ctx": self.ctx.to_wire(),
            "level": self.level,
            "seq": self.seq,
            "ttl": self.ttl,
        }

    @classmethod
    def from_wire(cls, data: dict) -> "TrustedOperationRequest":
        if not isinstance(data, dict):
            raise RequestError("request must be an object")
        missing = [f for f in REQUEST_FIELDS if f not in data]
        if missing:
            raise RequestError(f"request missing fields: {missing}")
        unknown = set(data) - set(REQUEST_FIELDS)
        if unknown:
            raise RequestError(f"unknown request fields: {sorted(unknown)}")
        if not isinstance(data["sid"], str) or not data["sid"]:
            raise RequestError("sid must be a non-empty string")
        try:
            act = Action(data["act"]).value
        except ValueError:
            raise RequestError(f"unknown action {data['act']!r}") from None
        if not isinstance(data["obj"], str) or not data["obj"]:
            raise RequestError("obj must be a non-empty string")
        seq = data["seq"]
        if not isinstance(seq, int) or isinstance(seq, bool) or seq < 1:
            raise RequestError("seq must be a positive integer")
        ttl = data["ttl"]
        if not isinstance(ttl, int) or isinstance(ttl, bool):
            raise RequestError("ttl must be an integer")
        if not isinstance(data["level"], str):
            raise RequestError("level must be a string")
        try:
            ctx = Context.from_wire(data["ctx"])
        except ValueError as exc:
            raise RequestError(str(exc)) from None
        return cls(
            sid=data["sid"],
            act=act,
            obj=data["obj"],
            scope=Scope.from_wire(data["scope"]),
            ctx=ctx,
            level=data["level"],
            seq=seq,
            ttl=ttl,
        )


def canonical_encode(request: TrustedOperationRequest) -> bytes:
    """Deterministic byte encoding; its SHA-256 is the request identity."""
    return canonical.encode(request.to_wire())


def request_digest(request: TrustedOperationRequest) -> str:
    return canonical.sha256_hex(canonical_encode(request))


@dataclass
class SessionState:
    sid: str
    subject: str
    session_key_id: str
    session_key: bytes
    next_seq: int = 1
    closed: bool = False


def build_request(
    session: SessionState,
    action: Action | str,
    obj: str,
    scope: Scope,
    ctx: Context,
    ttl_ms: int | None = None,
    default_ttl_ms: int = 30_000,
) -> TrustedOperationRequest:
    """Build the next request for this session, consuming one seq value."""
    if session.closed:
        raise SessionClosed(f"session {session.sid} is closed")
    act = Action(action).value
    ttl = default_ttl_ms if ttl_ms is None else ttl_ms
    request = TrustedOperationRequest(
        sid=session.sid,
        act=act,
        obj=obj,
        scope=scope,
        ctx=ctx,
        level=LEVEL_UNASSESSED,
        seq=session.next_seq,
        ttl=ttl,
    )
    session.next_seq += 1
    return request


def request_mac(session: SessionState, request: TrustedOperationRequest) -> str:
    return canonical.mac_hex(session.session_key, request.to_wire())


class PlaneClient:
    """Blocking client for the plane's local stream socket.

    One connection per client; the plane serves each connection on its own
    thread, so a single agent process can hold several clients if it wants
    parallel operations in flight.
    """

    def __init__(self, socket_path: str, timeout: float = 30.0):
        self._path = socket_path
        self._timeout = timeout
        self._sock: socket.socket | None = None

    def connect(self) -> None:
        if self._sock is not None:
            return
        sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        sock.settimeout(self._timeout)
        try:
            sock.connect(self._path)
        except OSError as exc:
            sock.close()
            raise PlaneUnreachable(f"cannot reach plane at {self._path}: {exc}") from exc
        self._sock = sock

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def __enter__(self) -> "PlaneClient":
        self.connect()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def call(self, message: dict) -> dict:
        self.connect()
        assert self._sock is not None
        try:
            wire.send_obj(self._sock, message)
            reply = wire.recv_obj(self._sock)
        except (OSError, wire.FramingError) as exc:
            self.close()
            raise PlaneUnreachable(f"plane connection failed: {exc}") from exc
        if reply is None:
            self.close()
            raise PlaneUnreachable("plane closed the connection")
        return reply

    # -- session lifecycle ------------------------------------------------

    def open_session(self, subject: str) -> SessionState:
        if not subject:
            raise RequestError("subject must be non-empty")
        reply = self.call({"type": "open_session", "subject": subject})
        if reply.get("type") != "session":
            raise PlaneUnreachable(f"session open refused: {reply}")
        return SessionState(
            sid=reply["sid"],
            subject=subject,
            session_key_id=reply["key_id"],
            session_key=bytes.fromhex(reply["key"]),
        )

    def submit(self, session: SessionState, request: TrustedOperationRequest) -> dict:
        """Submit a built request; returns the plane's typed response dict."""
        return self.call(
            {
                "type": "submit",
                "request": request.to_wire(),
                "mac": request_mac(session, request),
            }
        )

    def report(self, grant_id: str, outcome: dict, channel_key: bytes) -> dict:
        body = {"type": "report", "grant_id": grant_id, "outcome": outcome}
        body["mac"] = canonical.mac_fields(channel_key, body)
        return self.call(body)

    def report_result(
        self,
        grant_id: str,
        outcome: dict,
        channel_key: bytes,
        retries: int = 3,
        backoff_s: float = 0.05,
        spool_path: str | None = None,
    ) -> dict | None:
        """At-least-once result delivery: retry, then spool for later replay."""
        delay = backoff_s
        last_exc: Exception | None = None
        for _ in range(retries):
            try:
                return self.report(grant_id, outcome, channel_key)
            except PlaneUnreachable as exc:
                last_exc = exc
                time.sleep(delay)
                delay *= 2
        if spool_path is not None:
            line = canonical.encode({"grant_id": grant_id, "outcome": outcome}) + b"\n"
            with open(spool_path, "ab") as fh:
                fh.write(line)
            return None
        raise PlaneUnreachable(f"result delivery failed: {last_exc}")

    def remote_execute(self, grant_id: str, command_spec: dict) -> dict:
        return self.call(
            {"type": "remote_execute", "grant_id": grant_id, "command_spec": command_spec}
        )

    def await_ticket(self, ticket_id: str, timeout_ms: int = 30_000) -> dict:
        return self.call(
            {"type": "await_ticket", "ticket_id": ticket_id, "timeout_ms": timeout_ms}
        )


def op_scope(
    obj: str,
    extra_paths: tuple[str, ...] = (),
    command: str | None = None,
    endpoint: str | None = None,
) -> Scope:
    """Convenience scope builder covering one object (plus dest paths / argv)."""
    prefixes: tuple[str, ...] = ()
    if command is None or obj != command:
        prefixes = (obj,) + tuple(extra_paths)
    else:
        prefixes = tuple(extra_paths)
    patterns = (command,) if command is not None else ()
    return Scope(path_prefixes=prefixes, command_patterns=patterns, endpoint=endpoint)
