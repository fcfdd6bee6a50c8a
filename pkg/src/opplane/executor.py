"""Constrained executor: the only component that touches objects.

Every privileged operation arrives as a grant plus the exact request bytes
the plane authorized. The executor independently re-verifies the grant (MAC,
expiry, digest binding, action type, scope containment, single use) before
causing any side effect; a verification failure produces an outcome with
zero side effects. File paths are logical ("/etc/ssh/sshd_config",
"~/.ssh/id_rsa", "/workspace/django/tox.ini") and are mapped into a sandbox
fixture tree, canonicalized with symlinks resolved, and prefix-checked
against both the sandbox root and the approved scope. Commands are spawned
argv-style with no shell.
"""

from __future__ import annotations

import base64
import json
import os
import shutil
import subprocess
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from . import canonical
from .request import TrustedOperationRequest, match_command

# Verification mismatch codes, in check order.
BAD_MAC = "bad_mac"
EXPIRED = "expired"
DIGEST_MISMATCH = "digest_mismatch"
ACTION_MISMATCH = "action_mismatch"
SCOPE_MISMATCH = "scope_mismatch"
REPLAYED = "replayed"

# Codes meaning the presented work diverged from what was authorized; the
# plane records these as inconsistent rather than merely rejected.
INCONSISTENT_CODES = frozenset({DIGEST_MISMATCH, ACTION_MISMATCH, SCOPE_MISMATCH})

STATUS_COMPLETED = "completed"
STATUS_FAILED = "failed"
STATUS_REJECTED = "rejected"
STATUS_INCONSISTENT = "inconsistent"

DEFAULT_ALLOWED_COMMANDS = frozenset(
    {"grep", "find", "head", "tail", "sort", "wc", "ls", "cat", "uname", "df", "echo"}
)

FILE_ACTIONS = frozenset({"read", "write", "modify", "configure", "copy", "rename"})
COMMAND_ACTIONS = frozenset({"execute", "invoke"})


@dataclass(frozen=True)
class ScopedAction:
    """A grant, the request bytes it binds to, and the concrete work item."""

    grant: dict
    request_bytes: bytes
    action: str
    object: str
    arguments: dict

    @classmethod
    def from_request(cls, grant: dict, request: TrustedOperationRequest, arguments: dict | None = None) -> "ScopedAction":
        return cls(
            grant=grant,
            request_bytes=canonical.encode(request.to_wire()),
            action=request.act,
            object=request.obj,
            arguments=dict(arguments or {}),
        )


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    code: str | None = None
    detail: str = ""


@dataclass(frozen=True)
class ExecutionOutcome:
    status: str
    detail: str = ""
    output_digest: str | None = None
    output_b64: str | None = None

    def to_wire(self) -> dict:
        doc: dict = {"status": self.status, "detail": self.detail}
        if self.output_digest is not None:
            doc["output_digest"] = self.output_digest
        if self.output_b64 is not None:
            doc["output_b64"] = self.output_b64
        return doc

    @property
    def had_side_effect_potential(self) -> bool:
        return self.status in (STATUS_COMPLETED, STATUS_FAILED)


class GrantLedger:
    """Single-use registry: in-memory set mirrored to an append-only journal."""

    def __init__(self, journal_path: str | Path):
        self._path = Path(journal_path)
        self._lock = threading.Lock()
        self._consumed: set[str] = set()
        if self._path.exists():
            for line in self._path.read_text(encoding="utf-8").splitlines():
                line = line.strip()
                if line:
                    self._consumed.add(line)
        else:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._path.touch()

    def seen(self, grant_id: str) -> bool:
        with self._lock:
            return grant_id in self._consumed

    def consume(self, grant_id: str) -> bool:
        """Record a grant as used; False if it was already consumed."""
        with self._lock:
            if grant_id in self._consumed:
                return False
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(grant_id + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._consumed.add(grant_id)
            return True


class ConstrainedExecutor:
    def __init__(
        self,
        sandbox_root: str | Path,
        channel_key: bytes,
        journal_path: str | Path,
        allowed_commands=DEFAULT_ALLOWED_COMMANDS,
        now_ms=None,
        command_timeout_s: float = 20.0,
    ):
        self.sandbox_root = Path(sandbox_root).resolve()
        self.channel_key = channel_key
        self.ledger = GrantLedger(journal_path)
        self.allowed_commands = frozenset(allowed_commands)
        self._now_ms = now_ms or (lambda: int(time.time() * 1000))
        self.command_timeout_s = command_timeout_s
        self.invocations = 0
        self.executions = 0

    # -- path handling -----------------------------------------------------

    def map_path(self, logical: str) -> Path:
        """Map a logical path into the sandbox and canonicalize it."""
        if not isinstance(logical, str) or not logical:
            raise ValueError("logical path must be a non-empty string")
        if logical.startswith("~"):
            rel = logical[1:].lstrip("/")
            candidate = self.sandbox_root / "home" / rel
        elif logical.startswith("/"):
            candidate = self.sandbox_root / logical.lstrip("/")
        else:
            raise ValueError(f"logical path must be absolute or ~-rooted: {logical!r}")
        resolved = candidate.resolve()
        if not self._inside_sandbox(resolved):
            raise PermissionError(f"{logical} escapes the sandbox")
        return resolved

    def _inside_sandbox(self, resolved: Path) -> bool:
        return resolved == self.sandbox_root or self.sandbox_root in resolved.parents

    def _within_scope(self, logical: str, scope: dict) -> bool:
        """Physical containment of a logical path in approved prefixes."""
        prefixes = scope.get("path_prefixes", [])
        if not prefixes:
            return False
        try:
            target = self.map_path(logical)
        except (ValueError, PermissionError):
            return False
        for prefix in prefixes:
            try:
                base = self.map_path(prefix)
            except (ValueError, PermissionError):
                continue
            if target == base or base in target.parents:
                return True
        return False

    # -- verification --------------------------------------------------------

    def verify_grant(self, action: ScopedAction) -> VerifyResult:
        """Re-check everything the plane bound into the grant, in fixed order."""
        grant = action.grant
        if not isinstance(grant, dict) or not canonical.mac_fields_valid(self.channel_key, grant):
            return VerifyResult(False, BAD_MAC, "grant MAC invalid")
        if self._now_ms() > grant.get("expiry", 0):
            return VerifyResult(False, EXPIRED, "grant expired")
        if canonical.sha256_hex(action.request_bytes) != grant.get("request_digest"):
            return VerifyResult(False, DIGEST_MISMATCH, "request bytes do not match grant digest")
        try:
            request = TrustedOperationRequest.from_wire(json.loads(action.request_bytes))
        except Exception:
            return VerifyResult(False, DIGEST_MISMATCH, "request bytes unparsable")
        if action.action != request.act:
            return VerifyResult(False, ACTION_MISMATCH, f"{action.action} differs from granted {request.act}")
        if action.object != request.obj:
            return VerifyResult(False, SCOPE_MISMATCH, "object differs from granted object")
        scope_issue = self._scope_issue(action, grant.get("approved_scope", {}))
        if scope_issue is not None:
            return VerifyResult(False, SCOPE_MISMATCH, scope_issue)
        if self.ledger.seen(grant.get("grant_id", "")):
            return VerifyResult(False, REPLAYED, "grant already consumed")
        return VerifyResult(True)

    def _scope_issue(self, action: ScopedAction, scope: dict) -> str | None:
        if action.action in COMMAND_ACTIONS:
            patterns = scope.get("command_patterns", [])
            argv = action.arguments.get("argv")
            if not isinstance(argv, list) or not argv or not all(isinstance(t, str) for t in argv):
                return "command needs a non-empty argv"
            command = " ".join(argv)
            if not any(match_command(p, command) for p in patterns):
                return "argv matches no approved template"
            cwd = action.arguments.get("cwd", "/")
            prefixes = scope.get("path_prefixes", [])
            if prefixes:
                if not self._within_scope(cwd, scope):
                    return "cwd outside approved scope"
            elif cwd != "/":
                return "cwd outside approved scope"
            return None
        if action.action in FILE_ACTIONS:
            if not self._within_scope(action.object, scope):
                return "object outside approved scope"
            dest = action.arguments.get("dest")
            if action.action in ("copy", "rename"):
                if not isinstance(dest, str) or not dest:
                    return f"{action.action} needs a dest argument"
                if not self._within_scope(dest, scope):
                    return "dest outside approved scope"
            return None
        if action.action == "send":
            return None
        return f"unsupported action {action.action}"

    # -- execution -------------------------------------------------------------

    def run(self, action: ScopedAction) -> ExecutionOutcome:
        """Verify, consume, execute. Status rejected/inconsistent means the
        sandbox was not touched at all."""
        self.invocations += 1
        verdict = self.verify_grant(action)
        if not verdict.ok:
            status = STATUS_INCONSISTENT if verdict.code in INCONSISTENT_CODES else STATUS_REJECTED
            return ExecutionOutcome(status=status, detail=f"{verdict.code}: {verdict.detail}")
        if not self.ledger.consume(action.grant["grant_id"]):
            return ExecutionOutcome(status=STATUS_REJECTED, detail=f"{REPLAYED}: grant already consumed")
        return self.perform(
            action.action,
            action.object,
            action.arguments,
            scope=action.grant.get("approved_scope"),
        )

    def perform(self, action: str, obj: str, arguments: dict, scope: dict | None = None) -> ExecutionOutcome:
        """Execute one already-authorized operation inside the sandbox.

        When a scope is given, containment is re-checked at touch time so a
        path swapped underneath us after verification surfaces as
        inconsistent instead of escaping.
        """
        try:
            if action in ("read",):
                return self._do_read(obj, scope)
            if action in ("write", "modify", "configure"):
                return self._do_write(obj, arguments, scope)
            if action == "copy":
                return self._do_copy(obj, arguments, scope, move=False)
            if action == "rename":
                return self._do_copy(obj, arguments, scope, move=True)
            if action in COMMAND_ACTIONS:
                return self._do_command(obj, arguments, scope)
            if action == "send":
                return ExecutionOutcome(
                    status=STATUS_REJECTED,
                    detail="send has no executor path on this host",
                )
            return ExecutionOutcome(status=STATUS_REJECTED, detail=f"unsupported action {action}")
        except PermissionError as exc:
            return ExecutionOutcome(status=STATUS_INCONSISTENT, detail=str(exc))
        except OSError as exc:
            return ExecutionOutcome(status=STATUS_FAILED, detail=f"filesystem failure: {exc}")

    def _checked_path(self, logical: str, scope: dict | None) -> Path:
        path = self.map_path(logical)
        if scope is not None and not self._within_scope(logical, scope):
            raise PermissionError(f"{logical} escaped approved scope at touch time")
        return path

    def _do_read(self, obj: str, scope: dict | None) -> ExecutionOutcome:
        path = self._checked_path(obj, scope)
        self.executions += 1
        data = path.read_bytes()
        return ExecutionOutcome(
            status=STATUS_COMPLETED,
            detail=f"read {len(data)} bytes",
            output_digest=canonical.sha256_hex(data),
            output_b64=base64.b64encode(data).decode("ascii"),
        )

    def _do_write(self, obj: str, arguments: dict, scope: dict | None) -> ExecutionOutcome:
        content = arguments.get("content")
        if not isinstance(content, str):
            return ExecutionOutcome(status=STATUS_REJECTED, detail="write needs string content")
        path = self._checked_path(obj, scope)
        self.executions += 1
        path.parent.mkdir(parents=True, exist_ok=True)
        data = content.encode("utf-8")
        path.write_bytes(data)
        return ExecutionOutcome(
            status=STATUS_COMPLETED,
            detail=f"wrote {len(data)} bytes",
            output_digest=canonical.sha256_hex(data),
        )

    def _do_copy(self, obj: str, arguments: dict, scope: dict | None, move: bool) -> ExecutionOutcome:
        dest = arguments.get("dest")
        if not isinstance(dest, str) or not dest:
            return ExecutionOutcome(status=STATUS_REJECTED, detail="copy/rename needs a dest")
        src_path = self._checked_path(obj, scope)
        dest_path = self._checked_path(dest, scope)
        self.executions += 1
        if not src_path.exists():
            return ExecutionOutcome(status=STATUS_FAILED, detail=f"source missing: {obj}")
        dest_path.parent.mkdir(parents=True, exist_ok=True)
        if move:
            os.replace(src_path, dest_path)
        else:
            shutil.copyfile(src_path, dest_path)
        data = dest_path.read_bytes()
        return ExecutionOutcome(
            status=STATUS_COMPLETED,
            detail=f"{'renamed' if move else 'copied'} to {dest}",
            output_digest=canonical.sha256_hex(data),
        )

    def _do_command(self, obj: str, arguments: dict, scope: dict | None) -> ExecutionOutcome:
        argv = arguments.get("argv")
        if not isinstance(argv, list) or not argv:
            return ExecutionOutcome(status=STATUS_REJECTED, detail="command needs argv")
        program = os.path.basename(argv[0])
        if program not in self.allowed_commands:
            return ExecutionOutcome(status=STATUS_REJECTED, detail=f"command {program!r} not allowlisted")
        cwd_logical = arguments.get("cwd", "/")
        cwd = self._checked_path(cwd_logical, None)
        mapped = [argv[0]]
        for token in argv[1:]:
            mapped.append(self._map_token(token, cwd))
        self.executions += 1
        try:
            proc = subprocess.run(
                mapped,
                cwd=str(cwd),
                capture_output=True,
                timeout=self.command_timeout_s,
                check=False,
            )
        except subprocess.TimeoutExpired:
            return ExecutionOutcome(status=STATUS_FAILED, detail="command timed out")
        except FileNotFoundError:
            return ExecutionOutcome(status=STATUS_FAILED, detail=f"command not found: {program}")
        stdout = proc.stdout or b""
        if proc.returncode != 0:
            stderr = (proc.stderr or b"").decode("utf-8", "replace")
            return ExecutionOutcome(
                status=STATUS_FAILED,
                detail=f"exit {proc.returncode}: {stderr.strip()[:200]}",
                output_digest=canonical.sha256_hex(stdout),
            )
        return ExecutionOutcome(
            status=STATUS_COMPLETED,
            detail=f"exit 0, {len(stdout)} bytes of output",
            output_digest=canonical.sha256_hex(stdout),
            output_b64=base64.b64encode(stdout).decode("ascii"),
        )

    def _map_token(self, token: str, cwd: Path) -> str:
        """Rewrite absolute or ~-rooted argv tokens into the sandbox; check
        that relative path-looking tokens stay inside it."""
        if token.startswith("/") or token.startswith("~"):
            return str(self.map_path(token))
        if "/" in token or token.startswith(".."):
            resolved = (cwd / token).resolve()
            if not self._inside_sandbox(resolved):
                raise PermissionError(f"argv token {token!r} escapes the sandbox")
        return token
