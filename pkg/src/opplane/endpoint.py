"""Remote endpoint agent.

An endpoint executes plane-sealed command envelopes against its own fixture
tree. It trusts nothing the agent host says: every envelope must carry a
valid MAC under this endpoint's channel key, name this endpoint, advance the
durable channel sequence, sit inside the grant's lifetime, and stay within
the grant's approved scope. Any failed check is reported back before a
single byte of side effect happens. Results travel back MACed in the reverse
direction.

Two verification profiles model hardware asymmetry: "fast-verify" pays a
small per-command verification cost, "slow-setup" pays an additional
per-command setup cost before execution.
"""

from __future__ import annotations

import json
import logging
import socket
import socketserver
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from . import canonical, wire
from .executor import (
    COMMAND_ACTIONS,
    FILE_ACTIONS,
    STATUS_INCONSISTENT,
    STATUS_REJECTED,
    ConstrainedExecutor,
    ExecutionOutcome,
)
from .request import match_command, path_within_prefix

logger = logging.getLogger(__name__)

ENVELOPE_FIELDS = ("v", "endpoint_id", "grant", "command_spec", "channel_seq", "issued_at", "mac")

PROFILES = {
    "fast-verify": {"verify_delay_ms": 15, "setup_delay_ms": 0},
    "slow-setup": {"verify_delay_ms": 15, "setup_delay_ms": 150},
}


@dataclass(frozen=True)
class RejectedEnvelope:
    code: str
    detail: str


class EndpointKeyring:
    """Channel key plus the durable last-accepted channel sequence.

    The sequence survives restarts via a tiny state file, so a replayed
    envelope is still stale after the endpoint comes back up.
    """

    def __init__(self, endpoint_id: str, key: bytes, state_path: str | Path):
        self.endpoint_id = endpoint_id
        self.key = key
        self._state_path = Path(state_path)
        self._lock = threading.Lock()
        self.last_seq = 0
        if self._state_path.exists():
            try:
                doc = json.loads(self._state_path.read_text(encoding="utf-8"))
                self.last_seq = int(doc.get("last_seq", 0))
            except (json.JSONDecodeError, ValueError, TypeError):
                logger.warning("unreadable endpoint state at %s, starting at 0", state_path)

    def accept_seq(self, seq: int) -> bool:
        with self._lock:
            if seq <= self.last_seq:
                return False
            self.last_seq = seq
            self._state_path.parent.mkdir(parents=True, exist_ok=True)
            self._state_path.write_text(
                json.dumps({"endpoint_id": self.endpoint_id, "last_seq": seq}),
                encoding="utf-8",
            )
            return True

    @classmethod
    def load(cls, path: str | Path) -> "EndpointKeyring":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            endpoint_id=doc["endpoint_id"],
            key=bytes.fromhex(doc["key"]),
            state_path=Path(path).with_suffix(".state"),
        )


def verify_remote_command(
    envelope,
    keyring: EndpointKeyring,
    now_ms: int,
) -> RejectedEnvelope | None:
    """All acceptance checks for a received envelope; None when it may run.

    Consumes the channel sequence as its final step, so a rejected envelope
    never advances the counter and a replay of an accepted one is stale.
    """
    if not isinstance(envelope, dict):
        return RejectedEnvelope("malformed", "envelope is not an object")
    missing = [f for f in ENVELOPE_FIELDS if f not in envelope]
    if missing:
        return RejectedEnvelope("malformed", f"missing fields: {missing}")
    if envelope["v"] != 1:
        return RejectedEnvelope("version", f"unsupported envelope version {envelope['v']!r}")
    if not canonical.mac_fields_valid(keyring.key, envelope):
        return RejectedEnvelope("bad_mac", "envelope MAC invalid")
    if envelope["endpoint_id"] != keyring.endpoint_id:
        return RejectedEnvelope("endpoint_mismatch", "envelope addressed to another endpoint")
    grant = envelope["grant"]
    if not isinstance(grant, dict):
        return RejectedEnvelope("malformed", "grant missing")
    if now_ms > grant.get("expiry", 0):
        return RejectedEnvelope("expired", "grant expired before execution")
    spec = envelope["command_spec"]
    issue = _spec_issue(spec, grant)
    if issue is not None:
        return RejectedEnvelope("scope_mismatch", issue)
    seq = envelope["channel_seq"]
    if not isinstance(seq, int) or isinstance(seq, bool):
        return RejectedEnvelope("malformed", "channel_seq must be an integer")
    if not keyring.accept_seq(seq):
        return RejectedEnvelope("replayed", f"channel_seq {seq} not beyond {keyring.last_seq}")
    return None


def _spec_issue(spec, grant: dict) -> str | None:
    if not isinstance(spec, dict):
        return "command_spec is not an object"
    action = spec.get("action")
    obj = spec.get("object")
    if not isinstance(action, str) or not isinstance(obj, str):
        return "command_spec needs action and object"
    request_doc = spec.get("request")
    if not isinstance(request_doc, dict):
        return "command_spec carries no request document"
    if canonical.hexdigest(request_doc) != grant.get("request_digest"):
        return "request document does not match grant digest"
    if request_doc.get("act") != action:
        return "action differs from granted action"
    if request_doc.get("obj") != obj:
        return "object differs from granted object"
    scope = grant.get("approved_scope", {})
    if action in COMMAND_ACTIONS:
        argv = (spec.get("arguments") or {}).get("argv")
        if not isinstance(argv, list) or not argv:
            return "command needs argv"
        command = " ".join(str(t) for t in argv)
        if not any(match_command(p, command) for p in scope.get("command_patterns", [])):
            return "argv matches no approved template"
        return None
    if action in FILE_ACTIONS:
        prefixes = scope.get("path_prefixes", [])
        if not any(path_within_prefix(obj, p) for p in prefixes):
            return "object outside approved scope"
        dest = (spec.get("arguments") or {}).get("dest")
        if action in ("copy", "rename"):
            if not isinstance(dest, str):
                return "copy/rename needs dest"
            if not any(path_within_prefix(dest, p) for p in prefixes):
                return "dest outside approved scope"
        return None
    return f"unsupported action {action}"


class EndpointAgent:
    """Executes verified envelopes over this endpoint's fixture tree."""

    def __init__(
        self,
        keyring: EndpointKeyring,
        fixture_root: str | Path,
        profile: str = "fast-verify",
        receive_log: str | Path | None = None,
        journal_path: str | Path | None = None,
        now_ms=None,
        sleep=time.sleep,
    ):
        if profile not in PROFILES:
            raise ValueError(f"unknown delay profile {profile!r}")
        self.keyring = keyring
        self.profile = profile
        self.delays = PROFILES[profile]
        self._sleep = sleep
        self._now_ms = now_ms or (lambda: int(time.time() * 1000))
        root = Path(fixture_root)
        self.executor = ConstrainedExecutor(
            sandbox_root=root,
            channel_key=keyring.key,
            journal_path=journal_path or (root / ".grants.journal"),
            now_ms=self._now_ms,
        )
        self._receive_log = Path(receive_log) if receive_log else None
        self.received = 0

    def _log_receipt(self, envelope) -> None:
        self.received += 1
        if self._receive_log is None:
            return
        meta = {
            "at": self._now_ms(),
            "channel_seq": envelope.get("channel_seq") if isinstance(envelope, dict) else None,
            "grant_id": (envelope.get("grant") or {}).get("grant_id")
            if isinstance(envelope, dict)
            else None,
            "sid": (envelope.get("grant") or {}).get("sid") if isinstance(envelope, dict) else None,
            "seq": (envelope.get("grant") or {}).get("seq") if isinstance(envelope, dict) else None,
        }
        self._receive_log.parent.mkdir(parents=True, exist_ok=True)
        with open(self._receive_log, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(meta) + "\n")

    def handle_envelope(self, envelope) -> dict:
        """Verify and execute one envelope; always returns a MACed result."""
        try:
            return self._handle(envelope)
        except Exception as exc:  # noqa: BLE001 - the channel must always answer
            logger.exception("envelope handling failed")
            return self._result(envelope, ExecutionOutcome(status="failed", detail=str(exc)))

    def _handle(self, envelope) -> dict:
        self._log_receipt(envelope)
        self._sleep(self.delays["verify_delay_ms"] / 1000.0)
        rejection = verify_remote_command(envelope, self.keyring, self._now_ms())
        if rejection is not None:
            # Binding violations (wrong object, argv, or request document for
            # the grant) are evidence-relevant inconsistencies, not mere
            # transport noise.
            status = STATUS_INCONSISTENT if rejection.code == "scope_mismatch" else STATUS_REJECTED
            outcome = ExecutionOutcome(
                status=status,
                detail=f"{rejection.code}: {rejection.detail}",
            )
            return self._result(envelope, outcome)
        if self.delays["setup_delay_ms"]:
            self._sleep(self.delays["setup_delay_ms"] / 1000.0)
        spec = envelope["command_spec"]
        outcome = self.executor.perform(
            spec["action"],
            spec["object"],
            dict(spec.get("arguments") or {}),
            scope=envelope["grant"].get("approved_scope"),
        )
        return self._result(envelope, outcome)

    def _result(self, envelope, outcome: ExecutionOutcome) -> dict:
        grant = envelope.get("grant") if isinstance(envelope, dict) else None
        result = {
            "v": 1,
            "endpoint_id": self.keyring.endpoint_id,
            "grant_id": (grant or {}).get("grant_id", "unknown"),
            "channel_seq": envelope.get("channel_seq", 0) if isinstance(envelope, dict) else 0,
            "outcome": outcome.to_wire(),
        }
        result["mac"] = canonical.mac_fields(self.keyring.key, result)
        return result


class EndpointServer:
    """Threaded TCP front for an EndpointAgent, one envelope per frame."""

    def __init__(self, agent: EndpointAgent, host: str = "127.0.0.1", port: int = 0):
        self.agent = agent

        class Handler(socketserver.BaseRequestHandler):
            def handle(handler_self):
                sock = handler_self.request
                try:
                    while True:
                        envelope = wire.recv_obj(sock)
                        if envelope is None:
                            return
                        result = self.agent.handle_envelope(envelope)
                        wire.send_obj(sock, result)
                except (wire.FramingError, OSError) as exc:
                    logger.debug("endpoint connection dropped: %s", exc)

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self.host, self.port = self._server.server_address[:2]
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()


def tcp_transport(registry: dict[str, tuple[str, int]]):
    """Build a plane-side transport that dials endpoints over TCP."""

    def transport(endpoint_id: str, envelope: dict, timeout_s: float) -> dict:
        address = registry.get(endpoint_id)
        if address is None:
            raise ConnectionError(f"no address registered for endpoint {endpoint_id}")
        with socket.create_connection(address, timeout=timeout_s) as sock:
            sock.settimeout(timeout_s)
            wire.send_obj(sock, envelope)
            result = wire.recv_obj(sock)
        if result is None:
            raise ConnectionError("endpoint closed connection without a result")
        return result

    return transport
