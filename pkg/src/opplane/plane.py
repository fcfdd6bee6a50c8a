"""Trusted operation plane.

The plane is the only component that authorizes security-relevant
operations. It validates each submitted request (session binding, MAC,
sequence freshness, lifetime), reconstructs the typed operation instance,
runs the risk pipeline, appends evidence, and either releases a MACed
single-use grant, opens a confirmation ticket, or refuses. Grants are bound
to the exact request bytes through a SHA-256 digest, so nothing the agent
process mutates after authorization can still execute.

This module is the in-process core: deterministic, lock-protected, clock
injected. Process isolation, sockets, and the operator HTTP surface live in
server.py.
"""

from __future__ import annotations

import json
import logging
import secrets
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import canonical, evidence
from .request import (
    LEVEL_UNASSESSED,
    RequestError,
    TrustedOperationRequest,
    match_command,
    path_within_prefix,
)
from .risk import (
    COMMAND_CLASS,
    Action,
    Decision,
    ObjectRef,
    PolicyConfig,
    build_instance,
    classify_object,
    evaluate,
)

logger = logging.getLogger(__name__)

GRANT_DECISION_UC = "d_uc-approved"

EMPTY_SCOPE = {"path_prefixes": [], "command_patterns": []}

# Result states an executor or endpoint may report.
REPORTABLE = frozenset(
    {
        evidence.RES_COMPLETED,
        evidence.RES_FAILED,
        evidence.RES_REJECTED,
        evidence.RES_INCONSISTENT,
    }
)


class PlaneError(Exception):
    code = "PlaneError"

    def __init__(self, detail: str = ""):
        super().__init__(detail or self.code)
        self.detail = detail or self.code


class MalformedRequest(PlaneError):
    code = "MalformedRequest"


class UnknownSession(PlaneError):
    code = "UnknownSession"


class StaleSeq(PlaneError):
    code = "StaleSeq"


class ExpiredTtl(PlaneError):
    code = "ExpiredTtl"


class UnknownTicket(PlaneError):
    code = "UnknownTicket"


class AlreadyResolved(PlaneError):
    code = "AlreadyResolved"


class TicketExpired(PlaneError):
    code = "TicketExpired"


class UnknownGrant(PlaneError):
    code = "UnknownGrant"


class AlreadyClosed(PlaneError):
    code = "AlreadyClosed"


class UnknownEndpoint(PlaneError):
    code = "UnknownEndpoint"


class PlaneClock:
    """Wall clock plus a monotone event counter for total timestamp order."""

    def __init__(self, time_fn=time.time):
        self._time_fn = time_fn
        self._ctr = 0
        self._lock = threading.Lock()

    def now_ms(self) -> int:
        return int(self._time_fn() * 1000)

    def stamp(self) -> dict:
        with self._lock:
            self._ctr += 1
            ctr = self._ctr
        wall = datetime.fromtimestamp(self.now_ms() / 1000.0, tz=timezone.utc)
        return {"wall": wall.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z", "ctr": ctr}


class FakeClock(PlaneClock):
    """Manually advanced clock for expiry and timeout tests."""

    def __init__(self, start_ms: int = 1_000_000):
        self._now_ms = start_ms
        super().__init__(time_fn=lambda: self._now_ms / 1000.0)

    def advance_ms(self, delta: int) -> None:
        self._now_ms += delta


@dataclass
class _Session:
    sid: str
    subject: str
    key_id: str
    key: bytes
    last_seq: int = 0


@dataclass
class _GrantHandle:
    grant: dict
    act: str
    obj: str
    level_label: str
    decision: str
    closed: bool = False
    endpoint: str | None = None


@dataclass
class _Ticket:
    ticket_id: str
    sid: str
    seq: int
    act: str
    obj: str
    level_label: str
    requested_scope: dict
    approved_scope: dict
    request_digest: str
    ttl: int
    created_at: int
    expires_at: int
    state: str = "pending"
    grant: dict | None = None
    endpoint: str | None = None

    def summary(self) -> dict:
        return {
            "ticket_id": self.ticket_id,
            "sid": self.sid,
            "seq": self.seq,
            "act": self.act,
            "obj": self.obj,
            "level": self.level_label,
            "approved_scope": self.approved_scope,
            "created_at": self.created_at,
            "expires_at": self.expires_at,
            "state": self.state,
        }


@dataclass
class Granted:
    grant: dict


@dataclass
class TicketOpened:
    ticket: dict


@dataclass
class Denied:
    decision: str
    level: str
    reason: str


class TrustedPlane:
    """In-process plane state machine.

    executor_key MACs grants and local result reports; endpoint_keys MAC the
    per-endpoint command envelopes and their result frames. The evidence log
    is append-only and hash-chained; its path sits outside this process's
    working state so audits survive an agent-side compromise.
    """

    def __init__(
        self,
        policy: PolicyConfig,
        evidence_path,
        executor_key: bytes,
        endpoint_keys: dict[str, bytes] | None = None,
        clock: PlaneClock | None = None,
        state_path=None,
    ):
        self.policy = policy
        self.clock = clock or PlaneClock()
        self.executor_key = executor_key
        self.endpoint_keys = dict(endpoint_keys or {})
        self._evidence = evidence.EvidenceWriter(evidence_path)
        self._lock = threading.RLock()
        self._sessions: dict[str, _Session] = {}
        self._grants: dict[str, _GrantHandle] = {}
        self._tickets: dict[str, _Ticket] = {}
        # Sender counters for the endpoint channels. Endpoints persist the
        # highest sequence they accepted, so a restarted plane must resume
        # beyond its own last issue rather than start over at zero.
        self._state_path = Path(state_path) if state_path else None
        self._channel_seq: dict[str, int] = self._load_channel_state()
        self._events: list[dict] = []
        self._event_cond = threading.Condition(self._lock)

    def _load_channel_state(self) -> dict[str, int]:
        if self._state_path is None or not self._state_path.exists():
            return {}
        try:
            doc = json.loads(self._state_path.read_text(encoding="utf-8"))
            return {str(k): int(v) for k, v in doc.get("channel_seq", {}).items()}
        except (json.JSONDecodeError, ValueError, TypeError):
            logger.warning("unreadable plane state at %s, starting fresh", self._state_path)
            return {}

    def _persist_channel_state(self) -> None:
        if self._state_path is None:
            return
        self._state_path.parent.mkdir(parents=True, exist_ok=True)
        self._state_path.write_text(
            json.dumps({"channel_seq": self._channel_seq}), encoding="utf-8"
        )

    # -- events ------------------------------------------------------------

    def _emit(self, kind: str, data: dict) -> None:
        with self._event_cond:
            self._events.append(
                {"event_id": len(self._events) + 1, "kind": kind, "data": data}
            )
            self._event_cond.notify_all()

    def events_after(self, after: int) -> list[dict]:
        with self._lock:
            return [e for e in self._events if e["event_id"] > after]

    def wait_events(self, after: int, timeout_s: float) -> list[dict]:
        deadline = time.monotonic() + timeout_s
        with self._event_cond:
            while True:
                fresh = [e for e in self._events if e["event_id"] > after]
                if fresh:
                    return fresh
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return []
                self._event_cond.wait(remaining)

    # -- evidence ----------------------------------------------------------

    def _append(self, sid, act, obj, scope, level, seq, dec, res) -> dict:
        record = self._evidence.append(
            sid=sid,
            act=act,
            obj=obj,
            scope=scope,
            level=level,
            seq=seq,
            dec=dec,
            ts=self.clock.stamp(),
            res=res,
        )
        self._emit("evidence", record)
        return record

    def evidence_records(self) -> list[dict]:
        return self._evidence.records()

    def verify(self) -> evidence.ChainReport:
        return evidence.verify_chain(self._evidence.records())

    @property
    def evidence_path(self):
        return self._evidence.path

    # -- sessions ----------------------------------------------------------

    def open_session(self, subject: str) -> dict:
        if not isinstance(subject, str) or not subject:
            raise MalformedRequest("subject must be a non-empty string")
        with self._lock:
            sid = "s-" + secrets.token_hex(8)
            key = secrets.token_bytes(32)
            key_id = "k-" + secrets.token_hex(4)
            self._sessions[sid] = _Session(sid=sid, subject=subject, key_id=key_id, key=key)
        return {"sid": sid, "key_id": key_id, "key": key.hex()}

    # -- request handling ----------------------------------------------------

    def handle_request(self, fields: dict, mac: str):
        """Authorize one submitted request.

        Returns Granted, TicketOpened, or Denied. Raises a typed PlaneError
        for rejected submissions; every rejection leaves a terminal evidence
        record with res=rejected before the exception propagates.
        """
        try:
            request = TrustedOperationRequest.from_wire(fields)
        except RequestError as exc:
            self._reject(fields, str(exc))
            raise MalformedRequest(str(exc)) from None

        if request.level != LEVEL_UNASSESSED:
            self._reject(fields, "level must be unassessed on submission")
            raise MalformedRequest("requests must not pre-assess their level")

        with self._lock:
            session = self._sessions.get(request.sid)
            if session is None:
                self._reject(fields, "unknown session")
                raise UnknownSession(f"unknown session {request.sid}")
            if not canonical.mac_valid(session.key, request.to_wire(), mac):
                self._reject(fields, "request MAC invalid")
                raise MalformedRequest("request MAC invalid")
            if request.seq <= session.last_seq:
                self._reject(fields, f"stale seq {request.seq} <= {session.last_seq}")
                raise StaleSeq(
                    f"seq {request.seq} not beyond last accepted {session.last_seq}"
                )
            if request.ttl <= 0:
                self._reject(fields, "non-positive ttl")
                raise ExpiredTtl(f"proposed ttl {request.ttl} already expired")
            session.last_seq = request.seq

            return self._decide_locked(request)

    def _reject(self, fields, reason: str) -> None:
        data = fields if isinstance(fields, dict) else {}
        sid = data.get("sid") if isinstance(data.get("sid"), str) else "unknown"
        act = data.get("act") if isinstance(data.get("act"), str) else "unknown"
        obj = data.get("obj") if isinstance(data.get("obj"), str) else "unknown"
        seq = data.get("seq") if isinstance(data.get("seq"), int) and not isinstance(data.get("seq"), bool) else 0
        with self._lock:
            self._append(
                sid=sid,
                act=act,
                obj=obj,
                scope=EMPTY_SCOPE,
                level=LEVEL_UNASSESSED,
                seq=seq,
                dec=Decision.DENY.value,
                res=evidence.RES_REJECTED,
            )

    def _decide_locked(self, request: TrustedOperationRequest):
        session = self._sessions[request.sid]
        action = Action(request.act)
        instance = build_instance(
            subject=session.subject,
            action=action,
            path=request.obj,
            context=request.ctx,
            policy=self.policy,
        )
        vector, level, decision = evaluate(instance, self.policy)
        level_label = level.label

        if decision is Decision.DENY:
            self._append(
                sid=request.sid,
                act=request.act,
                obj=request.obj,
                scope=EMPTY_SCOPE,
                level=level_label,
                seq=request.seq,
                dec=Decision.DENY.value,
                res=evidence.RES_DENIED,
            )
            return Denied(
                decision=Decision.DENY.value,
                level=level_label,
                reason=f"{request.act} {request.obj} refused at {level_label}",
            )

        try:
            approved = self._clamp_scope(request, instance.object, action)
        except MalformedRequest as exc:
            self._reject(request.to_wire(), exc.detail)
            raise

        ttl = min(request.ttl, self.policy.ttl_max_ms)
        digest = canonical.sha256_hex(canonical.encode(request.to_wire()))

        if decision is Decision.UC:
            now = self.clock.now_ms()
            ticket = _Ticket(
                ticket_id="t-" + secrets.token_hex(8),
                sid=request.sid,
                seq=request.seq,
                act=request.act,
                obj=request.obj,
                level_label=level_label,
                requested_scope=request.scope.to_wire(),
                approved_scope=approved,
                request_digest=digest,
                ttl=ttl,
                created_at=now,
                expires_at=now + ttl,
                endpoint=request.scope.endpoint,
            )
            self._tickets[ticket.ticket_id] = ticket
            self._append(
                sid=request.sid,
                act=request.act,
                obj=request.obj,
                scope=approved,
                level=level_label,
                seq=request.seq,
                dec=Decision.UC.value,
                res=evidence.RES_PENDING,
            )
            self._emit("ticket", ticket.summary())
            return TicketOpened(ticket=ticket.summary())

        # d_ree, d_ia, d_ie: release a grant now.
        self._append(
            sid=request.sid,
            act=request.act,
            obj=request.obj,
            scope=approved,
            level=level_label,
            seq=request.seq,
            dec=decision.value,
            res=evidence.RES_PENDING,
        )
        if decision is Decision.IE:
            # Extra dispatch record precedes grant release at this level.
            self._append(
                sid=request.sid,
                act=request.act,
                obj=request.obj,
                scope=approved,
                level=level_label,
                seq=request.seq,
                dec=decision.value,
                res=evidence.RES_PENDING,
            )
        grant = self._issue_grant(
            request=request,
            digest=digest,
            decision=decision.value,
            level_label=level_label,
            approved=approved,
            ttl=ttl,
        )
        return Granted(grant=grant)

    def _issue_grant(self, request, digest, decision, level_label, approved, ttl) -> dict:
        grant = {
            "grant_id": "g-" + secrets.token_hex(8),
            "request_digest": digest,
            "sid": request.sid,
            "seq": request.seq,
            "decision": decision,
            "level": level_label,
            "approved_scope": approved,
            "expiry": self.clock.now_ms() + ttl,
            "nonce": secrets.token_hex(16),
        }
        grant["mac"] = canonical.mac_fields(self.executor_key, grant)
        self._grants[grant["grant_id"]] = _GrantHandle(
            grant=grant,
            act=request.act,
            obj=request.obj,
            level_label=level_label,
            decision=decision,
            endpoint=request.scope.endpoint,
        )
        self._emit(
            "grant",
            {"grant_id": grant["grant_id"], "sid": request.sid, "seq": request.seq, "decision": decision},
        )
        return grant

    def _clamp_scope(self, request: TrustedOperationRequest, obj: ObjectRef, action: Action) -> dict:
        """Narrow the requested scope to what this operation may touch.

        Path prefixes whose object class outranks the operation's target are
        clamped away rather than rejected; the target itself must stay
        covered or the request is malformed. For command operations exactly
        the matching argv template survives.
        """
        _, obj_rank = classify_object(obj.path, self.policy)
        kept_paths = []
        for prefix in request.scope.path_prefixes:
            _, rank = classify_object(prefix, self.policy)
            if rank <= obj_rank:
                kept_paths.append(prefix)
        patterns: list[str] = []
        if action in COMMAND_CLASS:
            patterns = [p for p in request.scope.command_patterns if match_command(p, obj.path)]
            if not patterns:
                raise MalformedRequest("command matches no requested template")
            patterns = patterns[:1]
        else:
            if not any(path_within_prefix(obj.path, p) for p in kept_paths):
                raise MalformedRequest("object lies outside the requested scope")
        approved: dict = {
            "path_prefixes": kept_paths,
            "command_patterns": patterns,
        }
        if request.scope.endpoint is not None:
            approved["endpoint"] = request.scope.endpoint
        return approved

    # -- confirmation ----------------------------------------------------------

    def pending_tickets(self) -> list[dict]:
        with self._lock:
            return [t.summary() for t in self._tickets.values() if t.state == "pending"]

    def get_ticket(self, ticket_id: str) -> dict:
        with self._lock:
            ticket = self._tickets.get(ticket_id)
            if ticket is None:
                raise UnknownTicket(f"unknown ticket {ticket_id}")
            return ticket.summary()

    def resolve_confirmation(self, ticket_id: str, decision: str) -> dict:
        """Resolve a pending ticket exactly once; approve releases the grant."""
        if decision not in ("approve", "deny"):
            raise MalformedRequest(f"unknown confirmation decision {decision!r}")
        with self._lock:
            ticket = self._tickets.get(ticket_id)
            if ticket is None:
                raise UnknownTicket(f"unknown ticket {ticket_id}")
            if ticket.state == "expired":
                raise TicketExpired(f"ticket {ticket_id} expired")
            if ticket.state != "pending":
                raise AlreadyResolved(f"ticket {ticket_id} already {ticket.state}")
            now = self.clock.now_ms()
            if now > ticket.expires_at:
                self._expire_ticket_locked(ticket)
                raise TicketExpired(f"ticket {ticket_id} expired")

            if decision == "deny":
                ticket.state = "denied"
                self._append(
                    sid=ticket.sid,
                    act=ticket.act,
                    obj=ticket.obj,
                    scope=ticket.approved_scope,
                    level=ticket.level_label,
                    seq=ticket.seq,
                    dec=Decision.UC.value,
                    res=evidence.RES_DENIED,
                )
                self._emit("ticket", ticket.summary())
                return {"state": "denied", "ticket_id": ticket_id}

            ticket.state = "approved"
            # Confirmation is itself evidence: record it before the grant moves.
            self._append(
                sid=ticket.sid,
                act=ticket.act,
                obj=ticket.obj,
                scope=ticket.approved_scope,
                level=ticket.level_label,
                seq=ticket.seq,
                dec=Decision.UC.value,
                res=evidence.RES_PENDING,
            )
            grant = {
                "grant_id": "g-" + secrets.token_hex(8),
                "request_digest": ticket.request_digest,
                "sid": ticket.sid,
                "seq": ticket.seq,
                "decision": GRANT_DECISION_UC,
                "level": ticket.level_label,
                "approved_scope": ticket.approved_scope,
                "expiry": now + ticket.ttl,
                "nonce": secrets.token_hex(16),
            }
            grant["mac"] = canonical.mac_fields(self.executor_key, grant)
            self._grants[grant["grant_id"]] = _GrantHandle(
                grant=grant,
                act=ticket.act,
                obj=ticket.obj,
                level_label=ticket.level_label,
                decision=Decision.UC.value,
                endpoint=ticket.endpoint,
            )
            ticket.grant = grant
            self._emit("ticket", ticket.summary())
            return {"state": "approved", "ticket_id": ticket_id, "grant": grant}

    def _expire_ticket_locked(self, ticket: _Ticket) -> None:
        ticket.state = "expired"
        self._append(
            sid=ticket.sid,
            act=ticket.act,
            obj=ticket.obj,
            scope=ticket.approved_scope,
            level=ticket.level_label,
            seq=ticket.seq,
            dec=Decision.UC.value,
            res=evidence.RES_DENIED,
        )
        self._emit("ticket", ticket.summary())

    def await_ticket(self, ticket_id: str, timeout_ms: int) -> dict:
        """Block until the ticket leaves pending (or the wait times out)."""
        deadline = time.monotonic() + timeout_ms / 1000.0
        with self._lock:
            ticket = self._tickets.get(ticket_id)
            if ticket is None:
                raise UnknownTicket(f"unknown ticket {ticket_id}")
        while True:
            with self._event_cond:
                ticket = self._tickets[ticket_id]
                if ticket.state == "approved" and ticket.grant is not None:
                    return {"state": "approved", "grant": ticket.grant}
                if ticket.state in ("denied", "expired"):
                    return {"state": ticket.state}
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return {"state": "pending"}
                self._event_cond.wait(min(remaining, 0.25))

    # -- results ----------------------------------------------------------------

    def close_evidence(self, grant_id: str, outcome: dict) -> dict:
        with self._lock:
            handle = self._grants.get(grant_id)
            if handle is None:
                raise UnknownGrant(f"unknown grant {grant_id}")
            if handle.closed:
                raise AlreadyClosed(f"grant {grant_id} already closed")
            status = outcome.get("status")
            if status not in REPORTABLE:
                raise MalformedRequest(f"unreportable outcome status {status!r}")
            handle.closed = True
            return self._append(
                sid=handle.grant["sid"],
                act=handle.act,
                obj=handle.obj,
                scope=handle.grant["approved_scope"],
                level=handle.level_label,
                seq=handle.grant["seq"],
                dec=handle.decision,
                res=status,
            )

    def report_result(self, grant_id: str, outcome: dict) -> dict:
        """Idempotent wrapper used by the report channel."""
        try:
            record = self.close_evidence(grant_id, outcome)
            return {"res": "closed", "record_hash": record["record_hash"]}
        except AlreadyClosed:
            return {"res": "duplicate"}

    # -- remote dispatch -----------------------------------------------------------

    def register_endpoint(self, endpoint_id: str, key: bytes) -> None:
        with self._lock:
            self.endpoint_keys[endpoint_id] = key
            self._channel_seq.setdefault(endpoint_id, 0)

    def seal_remote_command(self, grant_id: str, command_spec: dict) -> dict:
        """Wrap a grant and command into a MACed envelope for its endpoint.

        Appends the dispatch evidence record. Nothing is ever sealed for a
        denied operation because denials never produce a grant at all.
        """
        with self._lock:
            handle = self._grants.get(grant_id)
            if handle is None:
                raise UnknownGrant(f"unknown grant {grant_id}")
            if handle.closed:
                raise AlreadyClosed(f"grant {grant_id} already closed")
            endpoint_id = handle.endpoint
            if endpoint_id is None:
                raise MalformedRequest("grant is not endpoint-scoped")
            key = self.endpoint_keys.get(endpoint_id)
            if key is None:
                raise UnknownEndpoint(f"no key for endpoint {endpoint_id}")
            if self.clock.now_ms() > handle.grant["expiry"]:
                raise ExpiredTtl(f"grant {grant_id} expired before dispatch")
            request_doc = command_spec.get("request")
            if (
                not isinstance(request_doc, dict)
                or canonical.hexdigest(request_doc) != handle.grant["request_digest"]
            ):
                raise MalformedRequest("command_spec does not carry the granted request")
            seq = self._channel_seq.get(endpoint_id, 0) + 1
            self._channel_seq[endpoint_id] = seq
            # Persist before sending: a crash now skips a sequence value,
            # which endpoints tolerate; reusing one would strand the channel.
            self._persist_channel_state()
            envelope = {
                "v": 1,
                "endpoint_id": endpoint_id,
                "grant": handle.grant,
                "command_spec": command_spec,
                "channel_seq": seq,
                "issued_at": self.clock.now_ms(),
            }
            envelope["mac"] = canonical.mac_fields(key, envelope)
            self._append(
                sid=handle.grant["sid"],
                act=handle.act,
                obj=handle.obj,
                scope=handle.grant["approved_scope"],
                level=handle.level_label,
                seq=handle.grant["seq"],
                dec=handle.decision,
                res=evidence.RES_PENDING,
            )
            return envelope

    def remote_execute(self, grant_id: str, command_spec: dict, transport, timeout_s: float = 10.0) -> dict:
        """Seal, dispatch, verify the MACed result, close evidence.

        transport(endpoint_id, envelope, timeout_s) must return the endpoint's
        result document. Transport failure or timeout closes the lifecycle as
        failed; a result that fails MAC or binding checks closes it as
        inconsistent. Returns outcome plus plane-side phase timings.
        """
        envelope = self.seal_remote_command(grant_id, command_spec)
        endpoint_id = envelope["endpoint_id"]
        key = self.endpoint_keys[endpoint_id]
        t0 = time.perf_counter()
        try:
            result = transport(endpoint_id, envelope, timeout_s)
        except Exception as exc:  # noqa: BLE001 - any transport fault means no result
            execute_us = int((time.perf_counter() - t0) * 1_000_000)
            outcome = {"status": evidence.RES_FAILED, "detail": f"transport failure: {exc}"}
            t1 = time.perf_counter()
            self.report_result(grant_id, outcome)
            complete_us = int((time.perf_counter() - t1) * 1_000_000)
            return {"outcome": outcome, "phases": {"execute_us": execute_us, "complete_us": complete_us}}
        execute_us = int((time.perf_counter() - t0) * 1_000_000)

        t1 = time.perf_counter()
        outcome = self._accept_remote_result(envelope, result, key)
        self.report_result(grant_id, outcome)
        complete_us = int((time.perf_counter() - t1) * 1_000_000)
        return {"outcome": outcome, "phases": {"execute_us": execute_us, "complete_us": complete_us}}

    def _accept_remote_result(self, envelope: dict, result, key: bytes) -> dict:
        if not isinstance(result, dict) or not canonical.mac_fields_valid(key, result):
            return {"status": evidence.RES_INCONSISTENT, "detail": "result MAC invalid"}
        if (
            result.get("grant_id") != envelope["grant"]["grant_id"]
            or result.get("channel_seq") != envelope["channel_seq"]
            or result.get("endpoint_id") != envelope["endpoint_id"]
        ):
            return {"status": evidence.RES_INCONSISTENT, "detail": "result binding mismatch"}
        outcome = result.get("outcome")
        if not isinstance(outcome, dict) or outcome.get("status") not in REPORTABLE:
            return {"status": evidence.RES_INCONSISTENT, "detail": "result carries no valid outcome"}
        return outcome

    # -- expiry sweeping ------------------------------------------------------------

    def sweep(self, now_ms: int | None = None) -> int:
        """Close out expired tickets and unreported grants; returns closures."""
        now = self.clock.now_ms() if now_ms is None else now_ms
        closed = 0
        with self._lock:
            for ticket in self._tickets.values():
                if ticket.state == "pending" and now > ticket.expires_at:
                    self._expire_ticket_locked(ticket)
                    closed += 1
            for handle in self._grants.values():
                if not handle.closed and now > handle.grant["expiry"]:
                    handle.closed = True
                    self._append(
                        sid=handle.grant["sid"],
                        act=handle.act,
                        obj=handle.obj,
                        scope=handle.grant["approved_scope"],
                        level=handle.level_label,
                        seq=handle.grant["seq"],
                        dec=handle.decision,
                        res=evidence.RES_FAILED,
                    )
                    closed += 1
        return closed

    # -- introspection ----------------------------------------------------------------

    def grant_state(self, grant_id: str) -> dict:
        with self._lock:
            handle = self._grants.get(grant_id)
            if handle is None:
                raise UnknownGrant(f"unknown grant {grant_id}")
            return {
                "grant_id": grant_id,
                "closed": handle.closed,
                "decision": handle.decision,
                "endpoint": handle.endpoint,
            }
