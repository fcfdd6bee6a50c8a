"""Plane process: socket front, operator HTTP surface, expiry sweeper.

The agent process talks to the plane over a local stream socket carrying
length-prefixed canonical JSON frames; operators talk to it over a small
HTTP API (pending tickets, confirm, evidence, live event stream). Keys stay
inside this process; the agent side only ever sees MACed artifacts it cannot
mint itself.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import socketserver
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from . import canonical, wire
from .endpoint import tcp_transport
from .plane import Denied, Granted, PlaneError, TicketOpened, TrustedPlane
from .risk import load_policy

logger = logging.getLogger(__name__)


class PlaneSocketServer:
    """Serves the agent-facing channel on a Unix stream socket."""

    def __init__(self, plane: TrustedPlane, socket_path: str | Path, transport=None):
        self.plane = plane
        self.socket_path = str(socket_path)
        self.transport = transport
        outer = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(handler_self):
                sock = handler_self.request
                try:
                    while True:
                        message = wire.recv_obj(sock)
                        if message is None:
                            return
                        reply = outer.dispatch(message)
                        wire.send_obj(sock, reply)
                except (wire.FramingError, OSError) as exc:
                    logger.debug("agent connection dropped: %s", exc)

        class Server(socketserver.ThreadingUnixStreamServer):
            daemon_threads = True
            # shutdown must not wait on connections the agent left open
            block_on_close = False

        if os.path.exists(self.socket_path):
            os.unlink(self.socket_path)
        self._server = Server(self.socket_path, Handler)
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if os.path.exists(self.socket_path):
            os.unlink(self.socket_path)

    # -- message dispatch -------------------------------------------------

    def dispatch(self, message) -> dict:
        if not isinstance(message, dict) or not isinstance(message.get("type"), str):
            return {"type": "error", "code": "MalformedRequest", "detail": "untyped message"}
        kind = message["type"]
        try:
            if kind == "open_session":
                session = self.plane.open_session(message.get("subject", ""))
                return {"type": "session", **session}
            if kind == "submit":
                return self._submit(message)
            if kind == "report":
                return self._report(message)
            if kind == "remote_execute":
                return self._remote_execute(message)
            if kind == "await_ticket":
                state = self.plane.await_ticket(
                    message.get("ticket_id", ""),
                    int(message.get("timeout_ms", 30_000)),
                )
                return {"type": "ticket_state", **state}
            return {"type": "error", "code": "MalformedRequest", "detail": f"unknown message type {kind!r}"}
        except PlaneError as exc:
            return {"type": "error", "code": exc.code, "detail": exc.detail}

    def _submit(self, message) -> dict:
        outcome = self.plane.handle_request(message.get("request"), message.get("mac", ""))
        if isinstance(outcome, Granted):
            return {"type": "grant", "grant": outcome.grant}
        if isinstance(outcome, TicketOpened):
            return {"type": "ticket", "ticket": outcome.ticket}
        if isinstance(outcome, Denied):
            return {
                "type": "denial",
                "decision": outcome.decision,
                "level": outcome.level,
                "reason": outcome.reason,
            }
        raise PlaneError(f"unhandled outcome {outcome!r}")

    def _report(self, message) -> dict:
        if not canonical.mac_fields_valid(self.plane.executor_key, message):
            return {"type": "error", "code": "MalformedRequest", "detail": "report MAC invalid"}
        outcome = message.get("outcome")
        if not isinstance(outcome, dict):
            return {"type": "error", "code": "MalformedRequest", "detail": "report carries no outcome"}
        result = self.plane.report_result(message.get("grant_id", ""), outcome)
        return {"type": "ack", **result}

    def _remote_execute(self, message) -> dict:
        if self.transport is None:
            return {"type": "error", "code": "UnknownEndpoint", "detail": "no remote transport configured"}
        result = self.plane.remote_execute(
            message.get("grant_id", ""),
            message.get("command_spec") or {},
            self.transport,
        )
        return {"type": "result", **result}


def make_console_handler(plane: TrustedPlane, static_dir: Path | None = None):
    class ConsoleHandler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet the default stderr chatter
            logger.debug("console: " + fmt, *args)

        # -- plumbing -----------------------------------------------------

        def _json(self, status: int, doc) -> None:
            body = json.dumps(doc).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID")
            self.end_headers()
            self.wfile.write(body)

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            if length <= 0:
                return {}
            try:
                return json.loads(self.rfile.read(length).decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                return {}

        def do_OPTIONS(self):  # noqa: N802
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID")
            self.send_header("Content-Length", "0")
            self.end_headers()

        # -- API ----------------------------------------------------------

        def do_GET(self):  # noqa: N802
            url = urlparse(self.path)
            if url.path == "/api/pending":
                self._json(200, {"tickets": plane.pending_tickets()})
                return
            if url.path == "/api/evidence":
                query = parse_qs(url.query)
                after = int(query.get("after", ["0"])[0])
                records = plane.evidence_records()
                self._json(200, {"records": records[after:], "next": len(records)})
                return
            if url.path == "/api/evidence/verify":
                self._json(200, plane.verify().to_doc())
                return
            if url.path == "/api/events":
                self._stream_events(url)
                return
            if static_dir is not None:
                self._static(url.path)
                return
            self._json(404, {"error": "not found"})

        def do_POST(self):  # noqa: N802
            url = urlparse(self.path)
            if url.path != "/api/confirm":
                self._json(404, {"error": "not found"})
                return
            body = self._read_body()
            ticket_id = body.get("ticket_id")
            decision = body.get("decision")
            if not isinstance(ticket_id, str) or decision not in ("approve", "deny"):
                self._json(400, {"error": "confirm needs ticket_id and decision"})
                return
            try:
                result = plane.resolve_confirmation(ticket_id, decision)
            except PlaneError as exc:
                status = {
                    "UnknownTicket": 404,
                    "AlreadyResolved": 409,
                    "TicketExpired": 410,
                }.get(exc.code, 400)
                self._json(status, {"error": exc.code, "detail": exc.detail})
                return
            # The grant never travels to the operator surface.
            self._json(200, {"state": result["state"], "ticket_id": ticket_id})

        def _stream_events(self, url) -> None:
            query = parse_qs(url.query)
            after = int(query.get("after", ["0"])[0])
            header_cursor = self.headers.get("Last-Event-ID")
            if header_cursor and header_cursor.isdigit():
                after = max(after, int(header_cursor))
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            cursor = after
            try:
                while True:
                    events = plane.wait_events(cursor, timeout_s=15.0)
                    if not events:
                        self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                        continue
                    for event in events:
                        payload = json.dumps(event["data"])
                        frame = f"id: {event['event_id']}\nevent: {event['kind']}\ndata: {payload}\n\n"
                        self.wfile.write(frame.encode("utf-8"))
                        cursor = event["event_id"]
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                return

        def _static(self, path: str) -> None:
            rel = path.lstrip("/") or "index.html"
            target = (static_dir / rel).resolve()
            if static_dir.resolve() not in target.parents and target != static_dir.resolve():
                self._json(404, {"error": "not found"})
                return
            if not target.is_file():
                self._json(404, {"error": "not found"})
                return
            ctype = {
                ".html": "text/html; charset=utf-8",
                ".js": "text/javascript; charset=utf-8",
                ".css": "text/css; charset=utf-8",
                ".json": "application/json",
            }.get(target.suffix, "application/octet-stream")
            body = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    return ConsoleHandler


class PlaneService:
    """Everything a running plane needs: socket front, console, sweeper."""

    def __init__(
        self,
        plane: TrustedPlane,
        socket_path: str | Path,
        console_host: str = "127.0.0.1",
        console_port: int = 0,
        transport=None,
        static_dir: Path | None = None,
        sweep_interval_s: float = 0.1,
    ):
        self.plane = plane
        self.socket_server = PlaneSocketServer(plane, socket_path, transport=transport)
        self.http_server = ThreadingHTTPServer(
            (console_host, console_port), make_console_handler(plane, static_dir)
        )
        self.http_server.daemon_threads = True
        # event streams block in wait_events; never join them at shutdown
        self.http_server.block_on_close = False
        self.console_host, self.console_port = self.http_server.server_address[:2]
        self._sweep_interval = sweep_interval_s
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    @property
    def console_url(self) -> str:
        return f"http://{self.console_host}:{self.console_port}"

    def start(self) -> None:
        self.socket_server.start()
        http_thread = threading.Thread(target=self.http_server.serve_forever, daemon=True)
        http_thread.start()
        sweeper = threading.Thread(target=self._sweep_loop, daemon=True)
        sweeper.start()
        self._threads = [http_thread, sweeper]

    def _sweep_loop(self) -> None:
        while not self._stop.wait(self._sweep_interval):
            try:
                self.plane.sweep()
            except Exception:  # noqa: BLE001 - sweeping must never die silently
                logger.exception("sweep pass failed")

    def stop(self) -> None:
        self._stop.set()
        self.socket_server.stop()
        self.http_server.shutdown()
        self.http_server.server_close()


def load_endpoint_runtime(run_dir: Path) -> tuple[dict[str, tuple[str, int]], list[str]]:
    registry: dict[str, tuple[str, int]] = {}
    ids = []
    for path in sorted(run_dir.glob("endpoint-*.json")):
        doc = json.loads(path.read_text(encoding="utf-8"))
        registry[doc["endpoint_id"]] = (doc["host"], doc["port"])
        ids.append(doc["endpoint_id"])
    return registry, ids


def serve_plane(root: Path, policy_path: Path | None = None, console_port: int = 0, static_dir: Path | None = None) -> None:
    """Entry point for the spawned plane process. Blocks until SIGTERM."""
    root = Path(root)
    keyring = json.loads((root / "keys" / "keyring.json").read_text(encoding="utf-8"))
    policy = load_policy(policy_path or root / "policy.json")
    run_dir = root / "run"
    run_dir.mkdir(parents=True, exist_ok=True)
    registry, _ = load_endpoint_runtime(run_dir)
    transport = tcp_transport(registry) if registry else None
    plane = TrustedPlane(
        policy=policy,
        evidence_path=root / "evidence.log",
        executor_key=bytes.fromhex(keyring["executor_key"]),
        endpoint_keys={
            eid: bytes.fromhex(entry["key"]) for eid, entry in keyring.get("endpoints", {}).items()
        },
        state_path=root / "plane.state.json",
    )
    service = PlaneService(
        plane,
        socket_path=run_dir / "plane.sock",
        console_port=console_port,
        transport=transport,
        static_dir=static_dir,
    )
    service.start()
    runtime = {
        "socket_path": str(run_dir / "plane.sock"),
        "console_url": service.console_url,
        "pid": os.getpid(),
    }
    (run_dir / "plane.json").write_text(json.dumps(runtime), encoding="utf-8")

    stop = threading.Event()

    def _terminate(signum, frame):
        stop.set()

    signal.signal(signal.SIGTERM, _terminate)
    signal.signal(signal.SIGINT, _terminate)
    try:
        while not stop.wait(0.2):
            pass
    finally:
        service.stop()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="opplane-plane")
    parser.add_argument("--root", required=True)
    parser.add_argument("--policy", default=None)
    parser.add_argument("--console-port", type=int, default=0)
    parser.add_argument("--static-dir", default=None)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO)
    serve_plane(
        Path(args.root),
        policy_path=Path(args.policy) if args.policy else None,
        console_port=args.console_port,
        static_dir=Path(args.static_dir) if args.static_dir else None,
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
