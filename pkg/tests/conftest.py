"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import pytest

from opplane.plane import FakeClock, TrustedPlane
from opplane.request import Context, Scope, SessionState, build_request, request_mac
from opplane.risk import default_policy

EXECUTOR_KEY = bytes.fromhex("aa" * 32)
ENDPOINT_KEYS = {
    "pi-01": bytes.fromhex("bb" * 32),
    "hifive-01": bytes.fromhex("cc" * 32),
}

LOCAL_CTX = Context()


@pytest.fixture
def policy():
    return default_policy()


@pytest.fixture
def chi_policy():
    # No denylist hits, so L3 routes to user confirmation instead of denial.
    return default_policy().with_chi(denylist_classes=[], denylist_patterns=[])


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def make_plane(tmp_path, clock):
    def factory(policy=None, **kwargs):
        kwargs.setdefault("evidence_path", tmp_path / "evidence.log")
        kwargs.setdefault("executor_key", EXECUTOR_KEY)
        kwargs.setdefault("endpoint_keys", ENDPOINT_KEYS)
        kwargs.setdefault("clock", clock)
        return TrustedPlane(policy or default_policy(), **kwargs)

    return factory


@pytest.fixture
def plane(make_plane):
    return make_plane()


def open_state(plane: TrustedPlane, subject: str = "agent") -> SessionState:
    """Open a plane session and wrap it in client-side state."""
    doc = plane.open_session(subject)
    return SessionState(
        sid=doc["sid"],
        subject=subject,
        session_key_id=doc["key_id"],
        session_key=bytes.fromhex(doc["key"]),
    )


def submit(
    plane: TrustedPlane,
    session: SessionState,
    action: str,
    obj: str,
    scope: Scope,
    ctx: Context | None = None,
    ttl_ms: int | None = None,
):
    """Build, MAC, and submit one request; returns (request, plane outcome)."""
    request = build_request(session, action, obj, scope, ctx or LOCAL_CTX, ttl_ms=ttl_ms)
    outcome = plane.handle_request(request.to_wire(), request_mac(session, request))
    return request, outcome
