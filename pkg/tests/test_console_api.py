"""Operator console HTTP API, event stream, and the agent socket channel."""

from __future__ import annotations

import json
import threading
from http.client import HTTPConnection

import pytest

from conftest import EXECUTOR_KEY, LOCAL_CTX, open_state, submit
from opplane.plane import TicketOpened
from opplane.request import (
    PlaneClient,
    PlaneUnreachable,
    build_request,
    op_scope,
    request_digest,
    request_mac,
)
from opplane.server import PlaneService, PlaneSocketServer

TOX = "/workspace/django/tox.ini"
SSHD = "/etc/ssh/sshd_config"


@pytest.fixture
def service(tmp_path, plane):
    svc = PlaneService(plane, socket_path=tmp_path / "plane.sock", sweep_interval_s=0.05)
    svc.start()
    yield svc
    svc.stop()


def api(service, method, path, body=None, headers=None):
    """One console request; returns (status, headers, parsed json or None)."""
    conn = HTTPConnection(service.console_host, service.console_port, timeout=5)
    try:
        payload = None if body is None else json.dumps(body)
        conn.request(method, path, body=payload, headers=headers or {})
        resp = conn.getresponse()
        raw = resp.read()
        try:
            doc = json.loads(raw) if raw else None
        except ValueError:
            doc = None
        return resp.status, dict(resp.getheaders()), doc
    finally:
        conn.close()


def fetch_raw(service, path):
    conn = HTTPConnection(service.console_host, service.console_port, timeout=5)
    try:
        conn.request("GET", path)
        resp = conn.getresponse()
        return resp.status, resp.getheader("Content-Type"), resp.read()
    finally:
        conn.close()


def open_ticket(plane):
    """A send of a sensitive dotfile needs confirmation under the defaults."""
    session = open_state(plane)
    _, outcome = submit(plane, session, "send", "~/.bashrc", op_scope("~/.bashrc"))
    assert isinstance(outcome, TicketOpened)
    return session, outcome.ticket


def deny_once(plane, session):
    # protected sshd config is denylisted, leaving exactly one evidence record
    submit(plane, session, "write", SSHD, op_scope(SSHD))


class TestPendingAndConfirm:
    def test_pending_lists_open_tickets(self, service, plane):
        _, ticket = open_ticket(plane)
        status, _, doc = api(service, "GET", "/api/pending")
        assert status == 200
        assert [t["ticket_id"] for t in doc["tickets"]] == [ticket["ticket_id"]]
        assert doc["tickets"][0]["state"] == "pending"
        assert doc["tickets"][0]["act"] == "send"

    def test_confirm_approve_withholds_the_grant(self, service, plane):
        _, ticket = open_ticket(plane)
        status, _, doc = api(
            service,
            "POST",
            "/api/confirm",
            {"ticket_id": ticket["ticket_id"], "decision": "approve"},
        )
        assert status == 200
        # the operator surface must never carry grant material
        assert doc == {"state": "approved", "ticket_id": ticket["ticket_id"]}
        assert plane.get_ticket(ticket["ticket_id"])["state"] == "approved"

    def test_confirm_deny(self, service, plane):
        _, ticket = open_ticket(plane)
        status, _, doc = api(
            service,
            "POST",
            "/api/confirm",
            {"ticket_id": ticket["ticket_id"], "decision": "deny"},
        )
        assert status == 200
        assert doc["state"] == "denied"

    def test_double_confirm_conflicts(self, service, plane):
        _, ticket = open_ticket(plane)
        body = {"ticket_id": ticket["ticket_id"], "decision": "approve"}
        assert api(service, "POST", "/api/confirm", body)[0] == 200
        status, _, doc = api(service, "POST", "/api/confirm", body)
        assert status == 409
        assert doc["error"] == "AlreadyResolved"

    def test_unknown_ticket_is_404(self, service):
        status, _, doc = api(
            service, "POST", "/api/confirm", {"ticket_id": "t-nope", "decision": "deny"}
        )
        assert status == 404
        assert doc["error"] == "UnknownTicket"

    def test_expired_ticket_is_410(self, service, plane, clock):
        _, ticket = open_ticket(plane)
        clock.advance_ms(ticket["expires_at"] - ticket["created_at"] + 1)
        status, _, doc = api(
            service,
            "POST",
            "/api/confirm",
            {"ticket_id": ticket["ticket_id"], "decision": "approve"},
        )
        assert status == 410
        assert doc["error"] == "TicketExpired"

    @pytest.mark.parametrize(
        "body",
        [
            {},
            {"ticket_id": 7, "decision": "approve"},
            {"ticket_id": "t-1", "decision": "maybe"},
            {"ticket_id": "t-1"},
        ],
    )
    def test_malformed_confirm_is_400(self, service, body):
        status, _, doc = api(service, "POST", "/api/confirm", body)
        assert status == 400
        assert doc == {"error": "confirm needs ticket_id and decision"}

    def test_post_elsewhere_is_404(self, service):
        assert api(service, "POST", "/api/nope", {})[0] == 404


class TestEvidenceEndpoints:
    def test_evidence_pagination(self, service, plane):
        session = open_state(plane)
        for _ in range(3):
            deny_once(plane, session)
        status, _, doc = api(service, "GET", "/api/evidence")
        assert status == 200
        assert doc["next"] == 3
        assert [r["dec"] for r in doc["records"]] == ["d_deny"] * 3
        assert doc["records"] == plane.evidence_records()

        _, _, tail = api(service, "GET", "/api/evidence?after=2")
        assert tail["next"] == 3
        assert tail["records"] == plane.evidence_records()[2:]

        _, _, empty = api(service, "GET", "/api/evidence?after=3")
        assert empty == {"records": [], "next": 3}

    def test_verify_endpoint_matches_direct_verification(self, service, plane):
        session = open_state(plane)
        deny_once(plane, session)
        status, _, doc = api(service, "GET", "/api/evidence/verify")
        assert status == 200
        assert doc == plane.verify().to_doc()
        assert doc["chain_valid"] is True
        assert doc["records_checked"] == 1
        assert doc["valid"] is True

    def test_unknown_get_is_404_without_static_dir(self, service):
        status, _, doc = api(service, "GET", "/api/bogus")
        assert status == 404
        assert doc == {"error": "not found"}

    def test_options_preflight(self, service):
        status, headers, _ = api(service, "OPTIONS", "/api/confirm")
        assert status == 204
        assert headers["Access-Control-Allow-Origin"] == "*"
        assert "Last-Event-ID" in headers["Access-Control-Allow-Headers"]

    def test_json_replies_allow_cross_origin(self, service):
        _, headers, _ = api(service, "GET", "/api/pending")
        assert headers["Access-Control-Allow-Origin"] == "*"


class TestStaticFiles:
    @pytest.fixture
    def static_service(self, tmp_path, plane):
        static = tmp_path / "static"
        static.mkdir()
        (static / "index.html").write_text("<h1>console</h1>", encoding="utf-8")
        (static / "app.js").write_text("export {};", encoding="utf-8")
        (tmp_path / "secret.txt").write_text("keys", encoding="utf-8")
        svc = PlaneService(
            plane, socket_path=tmp_path / "static.sock", static_dir=static, sweep_interval_s=5.0
        )
        svc.start()
        yield svc
        svc.stop()

    def test_root_serves_index(self, static_service):
        status, ctype, body = fetch_raw(static_service, "/")
        assert status == 200
        assert ctype == "text/html; charset=utf-8"
        assert body == b"<h1>console</h1>"

    def test_js_content_type(self, static_service):
        status, ctype, _ = fetch_raw(static_service, "/app.js")
        assert status == 200
        assert ctype == "text/javascript; charset=utf-8"

    def test_traversal_stays_inside_static_dir(self, static_service):
        status, _, body = fetch_raw(static_service, "/../secret.txt")
        assert status == 404
        assert b"keys" not in body

    def test_missing_file_is_404(self, static_service):
        assert fetch_raw(static_service, "/missing.js")[0] == 404

    def test_api_still_wins_over_static(self, static_service):
        status, _, doc = api(static_service, "GET", "/api/pending")
        assert status == 200
        assert doc == {"tickets": []}


def read_frame(resp):
    """Read one id/event/data frame off an open event stream."""
    frame = {}
    while True:
        line = resp.readline().decode("utf-8")
        if line in ("\n", "\r\n"):
            if frame:
                return frame
            continue
        if line.startswith(":"):
            continue
        name, _, value = line.rstrip("\r\n").partition(": ")
        if name == "id":
            frame["id"] = int(value)
        elif name == "event":
            frame["event"] = value
        elif name == "data":
            frame["data"] = json.loads(value)


class TestEventStream:
    def test_stream_replays_history_from_the_start(self, service, plane):
        session = open_state(plane)
        deny_once(plane, session)
        conn = HTTPConnection(service.console_host, service.console_port, timeout=5)
        try:
            conn.request("GET", "/api/events")
            resp = conn.getresponse()
            assert resp.status == 200
            assert resp.getheader("Content-Type") == "text/event-stream"
            frame = read_frame(resp)
            assert frame["id"] == 1
            assert frame["event"] == "evidence"
            assert frame["data"]["dec"] == "d_deny"
            assert frame["data"]["obj"] == SSHD
        finally:
            conn.close()

    def test_last_event_id_resumes_past_seen_events(self, service, plane):
        session = open_state(plane)
        deny_once(plane, session)
        submit(plane, session, "write", TOX, op_scope(TOX))
        conn = HTTPConnection(service.console_host, service.console_port, timeout=5)
        try:
            conn.request("GET", "/api/events", headers={"Last-Event-ID": "1"})
            resp = conn.getresponse()
            first = read_frame(resp)
            second = read_frame(resp)
            assert [first["id"], second["id"]] == [2, 3]
            assert {first["event"], second["event"]} == {"grant", "evidence"}
        finally:
            conn.close()

    def test_live_events_arrive_mid_stream(self, service, plane):
        session = open_state(plane)
        conn = HTTPConnection(service.console_host, service.console_port, timeout=5)
        try:
            conn.request("GET", "/api/events")
            resp = conn.getresponse()
            # stream is idle until the plane records something
            deny_once(plane, session)
            frame = read_frame(resp)
            assert frame["id"] == 1
            assert frame["data"]["res"] == "denied"
        finally:
            conn.close()


class TestSocketDispatch:
    @pytest.fixture
    def dispatcher(self, tmp_path, plane):
        server = PlaneSocketServer(plane, tmp_path / "dispatch.sock")
        server.start()
        yield server
        server.stop()

    @pytest.mark.parametrize("message", [["open_session"], {"type": 7}, "hello", None])
    def test_untyped_messages_rejected(self, dispatcher, message):
        assert dispatcher.dispatch(message) == {
            "type": "error",
            "code": "MalformedRequest",
            "detail": "untyped message",
        }

    def test_unknown_type_rejected(self, dispatcher):
        reply = dispatcher.dispatch({"type": "bogus"})
        assert reply["code"] == "MalformedRequest"
        assert reply["detail"] == "unknown message type 'bogus'"

    def test_open_session_needs_subject(self, dispatcher):
        reply = dispatcher.dispatch({"type": "open_session"})
        assert reply == {
            "type": "error",
            "code": "MalformedRequest",
            "detail": "subject must be a non-empty string",
        }

    def test_submit_surfaces_denials(self, dispatcher, plane):
        session = open_state(plane)
        request = build_request(session, "write", SSHD, op_scope(SSHD), LOCAL_CTX)
        reply = dispatcher.dispatch(
            {"type": "submit", "request": request.to_wire(), "mac": request_mac(session, request)}
        )
        assert reply == {
            "type": "denial",
            "decision": "d_deny",
            "level": "L3",
            "reason": "write /etc/ssh/sshd_config refused at L3",
        }

    def test_submit_rejection_carries_typed_code(self, dispatcher, plane):
        session = open_state(plane)
        request = build_request(session, "write", TOX, op_scope(TOX), LOCAL_CTX)
        reply = dispatcher.dispatch(
            {"type": "submit", "request": request.to_wire(), "mac": "00" * 32}
        )
        assert reply == {
            "type": "error",
            "code": "MalformedRequest",
            "detail": "request MAC invalid",
        }

    def test_report_requires_channel_mac(self, dispatcher):
        reply = dispatcher.dispatch(
            {"type": "report", "grant_id": "g-1", "outcome": {"status": "completed"}}
        )
        assert reply["detail"] == "report MAC invalid"

    def test_report_outcome_must_be_an_object(self, dispatcher):
        from opplane.canonical import mac_fields

        body = {"type": "report", "grant_id": "g-1", "outcome": "done"}
        body["mac"] = mac_fields(EXECUTOR_KEY, body)
        reply = dispatcher.dispatch(body)
        assert reply["detail"] == "report carries no outcome"

    def test_report_unknown_grant(self, dispatcher):
        from opplane.canonical import mac_fields

        body = {"type": "report", "grant_id": "g-nope", "outcome": {"status": "completed"}}
        body["mac"] = mac_fields(EXECUTOR_KEY, body)
        reply = dispatcher.dispatch(body)
        assert reply == {
            "type": "error",
            "code": "UnknownGrant",
            "detail": "unknown grant g-nope",
        }

    def test_remote_execute_needs_a_transport(self, dispatcher):
        reply = dispatcher.dispatch(
            {"type": "remote_execute", "grant_id": "g-1", "command_spec": {}}
        )
        assert reply == {
            "type": "error",
            "code": "UnknownEndpoint",
            "detail": "no remote transport configured",
        }

    def test_await_unknown_ticket(self, dispatcher):
        reply = dispatcher.dispatch({"type": "await_ticket", "ticket_id": "t-nope"})
        assert reply["code"] == "UnknownTicket"


class TestAgentChannel:
    def test_full_grant_and_report_cycle(self, service, plane):
        with PlaneClient(service.socket_server.socket_path) as client:
            session = client.open_session("agent")
            request = build_request(session, "write", TOX, op_scope(TOX), LOCAL_CTX)
            reply = client.submit(session, request)
            assert reply["type"] == "grant"
            grant = reply["grant"]
            assert grant["request_digest"] == request_digest(request)
            assert grant["decision"] == "d_ree"

            ack = client.report(
                grant["grant_id"], {"status": "completed", "detail": "exit 0"}, EXECUTOR_KEY
            )
            assert ack["type"] == "ack"
            assert ack["res"] == "closed"
            assert ack["record_hash"] == plane.evidence_records()[-1]["record_hash"]

            dup = client.report(
                grant["grant_id"], {"status": "completed", "detail": "exit 0"}, EXECUTOR_KEY
            )
            assert dup == {"type": "ack", "res": "duplicate"}

    def test_ticket_flow_over_the_socket(self, service, plane):
        with PlaneClient(service.socket_server.socket_path) as client:
            session = client.open_session("agent")
            request = build_request(session, "send", "~/.bashrc", op_scope("~/.bashrc"), LOCAL_CTX)
            reply = client.submit(session, request)
            assert reply["type"] == "ticket"
            tid = reply["ticket"]["ticket_id"]

            timer = threading.Timer(0.1, plane.resolve_confirmation, args=(tid, "approve"))
            timer.start()
            try:
                state = client.await_ticket(tid, timeout_ms=5_000)
            finally:
                timer.join()
            assert state["type"] == "ticket_state"
            assert state["state"] == "approved"
            # the agent channel does receive the released grant
            assert state["grant"]["decision"] == "d_uc-approved"

    def test_unreachable_plane(self, tmp_path):
        client = PlaneClient(str(tmp_path / "nope.sock"))
        with pytest.raises(PlaneUnreachable, match="cannot reach plane"):
            client.open_session("agent")
