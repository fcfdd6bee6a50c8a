"""Workload harness: spawn the stack, drive the tasks, measure, report.

Protected mode spawns the endpoints and the plane as separate processes,
then plays each task through the full submit/grant/execute/report protocol,
recording authorize/execute/complete phase timings per operation. Baseline
mode performs the same work directly against the fixture trees with no
plane at all, yielding a single undecomposed duration per task.

Fault injection runs the protected flow but perturbs it from the agent
side: grant bytes flipped, grants re-presented, objects broadened beyond
the approved scope, or results silently dropped. A verdict per injected
operation records whether the stack caught it.
"""

from __future__ import annotations

import base64
import json
import subprocess
import sys
import time
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import canonical, evidence, fixtures
from .executor import (
    STATUS_COMPLETED,
    STATUS_INCONSISTENT,
    STATUS_REJECTED,
    ConstrainedExecutor,
    ScopedAction,
)
from .request import PlaneClient, Scope, build_request, canonical_encode
from .risk import Context, DECISION_SEVERITY, Decision, Origin
from .tasks import OpSpec, TaskSpec, select_tasks

REPORT_SCHEMA = "opplane-report/1"

INJECT_MODES = ("none", "tamper", "replay", "broaden", "drop")

DEFAULT_PROFILES = {"pi-01": "fast-verify", "hifive-01": "slow-setup"}

# Object a broadening attack retargets to: protected, never in any task scope.
BROADEN_TARGET = "/etc/passwd"

DROP_TTL_MS = 600

_SEVERITY_INDEX = {d.value: i for i, d in enumerate(DECISION_SEVERITY)}


class HarnessError(RuntimeError):
    pass


class FixtureMissing(HarnessError):
    pass


class ComponentSpawnFailure(HarnessError):
    pass


@dataclass(frozen=True)
class PhaseTiming:
    """Per-task phase durations in microseconds.

    Baseline rows carry the whole run in total_us and zero out the phases,
    mirroring an undecomposed measurement.
    """

    task_id: str
    mode: str
    authorize_us: int
    execute_us: int
    complete_us: int
    total_us: int

    def to_row(self) -> dict:
        return {
            "task": self.task_id,
            "mode": self.mode,
            "authorize_us": self.authorize_us,
            "execute_us": self.execute_us,
            "complete_us": self.complete_us,
            "total_us": self.total_us,
        }


def _now_us() -> int:
    return time.perf_counter_ns() // 1000


def _headline_decision(decisions: list[str]) -> str | None:
    """Most severe decision across a task's operations."""
    seen = [d for d in decisions if d in _SEVERITY_INDEX]
    if not seen:
        return None
    return max(seen, key=lambda d: _SEVERITY_INDEX[d])


# -- process management ------------------------------------------------------


class _Spawned:
    def __init__(self, name: str, argv: list[str], log_path: Path):
        self.name = name
        log_path.parent.mkdir(parents=True, exist_ok=True)
        self._log = open(log_path, "ab")
        self.proc = subprocess.Popen(argv, stdout=self._log, stderr=subprocess.STDOUT)
        self.log_path = log_path

    @property
    def alive(self) -> bool:
        return self.proc.poll() is None

    def stop(self) -> None:
        if self.alive:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait(timeout=5)
        self._log.close()

    def failure_excerpt(self) -> str:
        try:
            tail = self.log_path.read_text(encoding="utf-8", errors="replace")[-800:]
        except OSError:
            tail = "<no log>"
        return f"{self.name} exited with {self.proc.poll()}: {tail}"


class Stack:
    """Spawned endpoint and plane processes plus their runtime descriptors."""

    def __init__(self, root: Path):
        self.root = root
        self.processes: list[_Spawned] = []
        self.socket_path = ""
        self.console_url = ""
        self.endpoint_ids: list[str] = []

    def stop(self) -> None:
        for spawned in reversed(self.processes):
            spawned.stop()

    def __enter__(self) -> "Stack":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def _await_file(path: Path, spawned: _Spawned, timeout_s: float = 15.0) -> None:
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        if not spawned.alive:
            raise ComponentSpawnFailure(spawned.failure_excerpt())
        if path.exists() and path.stat().st_size > 0:
            return
        time.sleep(0.02)
    raise ComponentSpawnFailure(f"{spawned.name} never published {path}")


def spawn_stack(
    root: Path,
    policy_path: Path | None = None,
    profiles: dict[str, str] | None = None,
    console_port: int = 0,
) -> Stack:
    """Start endpoint processes, then the plane that routes to them."""
    root = Path(root)
    run_dir = root / "run"
    run_dir.mkdir(parents=True, exist_ok=True)
    for stale in ["plane.json", "plane.sock", *[p.name for p in run_dir.glob("endpoint-*.json")]]:
        target = run_dir / stale
        if target.exists():
            target.unlink()

    chosen = dict(DEFAULT_PROFILES)
    chosen.update(profiles or {})
    stack = Stack(root)
    try:
        for endpoint_id, profile in sorted(chosen.items()):
            keyring_path = root / "endpoints" / f"{endpoint_id}.keyring.json"
            if not keyring_path.exists():
                raise FixtureMissing(f"no endpoint keyring at {keyring_path}; run init first")
            spawned = _Spawned(
                f"endpoint-{endpoint_id}",
                [
                    sys.executable,
                    "-m",
                    "opplane.cli",
                    "endpoint",
                    "--root",
                    str(root),
                    "--id",
                    endpoint_id,
                    "--profile",
                    profile,
                ],
                run_dir / "logs" / f"endpoint-{endpoint_id}.log",
            )
            stack.processes.append(spawned)
            _await_file(run_dir / f"endpoint-{endpoint_id}.json", spawned)
            stack.endpoint_ids.append(endpoint_id)

        plane_argv = [
            sys.executable,
            "-m",
            "opplane.cli",
            "plane",
            "--root",
            str(root),
            "--console-port",
            str(console_port),
        ]
        if policy_path is not None:
            plane_argv += ["--policy", str(policy_path)]
        plane = _Spawned("plane", plane_argv, run_dir / "logs" / "plane.log")
        stack.processes.append(plane)
        _await_file(run_dir / "plane.json", plane)
        runtime = json.loads((run_dir / "plane.json").read_text(encoding="utf-8"))
        stack.socket_path = runtime["socket_path"]
        stack.console_url = runtime["console_url"]
    except BaseException:
        stack.stop()
        raise
    return stack


# -- shared helpers ----------------------------------------------------------


def _compose_summary(outputs: list[tuple[str, dict]]) -> str:
    """Deterministic digest-of-what-we-read content for summary writes."""
    sections = []
    for obj, outcome in outputs:
        blob = outcome.get("output_b64")
        if blob:
            text = base64.b64decode(blob).decode("utf-8", "replace")
            first = text.splitlines()[0] if text.splitlines() else ""
            sections.append(f"{obj}: {len(text)} chars, starts {first!r}")
        elif outcome.get("output_digest"):
            sections.append(f"{obj}: digest {outcome['output_digest'][:16]}")
    body = "\n".join(sections)
    return f"collected {len(sections)} sources\n{body}\n"


def _op_scope(op: OpSpec) -> Scope:
    prefixes = op.path_prefixes
    if not prefixes and op.command is None:
        prefixes = (op.obj,)
    patterns = (op.command,) if op.command is not None else ()
    return Scope(path_prefixes=prefixes, command_patterns=patterns, endpoint=op.endpoint)


def _op_context(op: OpSpec) -> Context:
    return Context(
        origin=Origin(op.origin),
        task_consistent=op.task_consistent,
        user_present=True,
        cross_boundary=op.cross_boundary,
        chained=op.chained,
    )


def _receipt_count(root: Path, endpoint_ids: list[str]) -> int:
    total = 0
    for endpoint_id in endpoint_ids:
        log = root / "run" / f"endpoint-{endpoint_id}.receive.log"
        if log.exists():
            total += sum(1 for line in log.read_text(encoding="utf-8").splitlines() if line)
    return total


def _post_confirm(console_url: str, ticket_id: str, decision: str) -> dict:
    body = json.dumps({"ticket_id": ticket_id, "decision": decision}).encode("utf-8")
    req = urllib.request.Request(
        f"{console_url}/api/confirm",
        data=body,
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    with urllib.request.urlopen(req, timeout=10) as resp:
        return json.loads(resp.read().decode("utf-8"))


def _await_terminal(evidence_path: Path, sid: str, seq: int, timeout_s: float = 6.0) -> str | None:
    """Poll the evidence log until (sid, seq) reaches a terminal res."""
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        if evidence_path.exists():
            for rec in evidence.load_records(evidence_path):
                if (
                    isinstance(rec, dict)
                    and rec.get("sid") == sid
                    and rec.get("seq") == seq
                    and rec.get("res") in evidence.TERMINAL_RES
                ):
                    return rec["res"]
        time.sleep(0.05)
    return None


# -- protected-mode runner -----------------------------------------------------


class ProtectedRunner:
    def __init__(
        self,
        root: Path,
        stack: Stack,
        executor_key: bytes,
        inject: str = "none",
        confirm: str = "wait",
        endpoint_override: str | None = None,
    ):
        self.root = root
        self.stack = stack
        self.executor_key = executor_key
        self.inject = inject
        self.confirm = confirm
        self.endpoint_override = endpoint_override
        self.executor = ConstrainedExecutor(
            sandbox_root=root / "fixtures" / "local",
            channel_key=executor_key,
            journal_path=root / "run" / "executor.journal",
        )

    def run_task(self, task: TaskSpec, track_receipts: bool = True) -> dict:
        client = PlaneClient(self.stack.socket_path)
        receipts_before = (
            _receipt_count(self.root, self.stack.endpoint_ids) if track_receipts else None
        )
        executions_before = self.executor.executions
        outputs: list[tuple[str, dict]] = []
        op_rows: list[dict] = []
        try:
            session = client.open_session("openclaw-agent")
            for index, op in enumerate(task.ops):
                row = self._run_op(client, session, op, outputs)
                row["i"] = index
                op_rows.append(row)
        finally:
            client.close()

        authorize = sum(r["authorize_us"] for r in op_rows)
        execute = sum(r["execute_us"] for r in op_rows)
        complete = sum(r["complete_us"] for r in op_rows)
        headline = _headline_decision([r["decision"] for r in op_rows if r["decision"]])
        row = {
            "task": task.task_id,
            "title": task.title,
            "mode": "protected",
            "sid": session.sid,
            "expected_decision": task.expected_decision,
            "decision": headline,
            "ops": op_rows,
            "authorize_us": authorize,
            "execute_us": execute,
            "complete_us": complete,
            "total_us": authorize + execute + complete,
            "executor_executions": self.executor.executions - executions_before,
        }
        if receipts_before is not None:
            row["endpoint_receipts"] = (
                _receipt_count(self.root, self.stack.endpoint_ids) - receipts_before
            )
        row["ok"] = self._task_ok(task, row)
        return row

    def _task_ok(self, task: TaskSpec, row: dict) -> bool:
        if row["decision"] != task.expected_decision:
            return False
        denied = task.expected_decision == Decision.DENY.value
        if denied:
            side_effect_free = row["execute_us"] == 0 and row["complete_us"] == 0
            untouched = row["executor_executions"] == 0 and row.get("endpoint_receipts", 0) == 0
            return side_effect_free and untouched
        if self.inject != "none":
            return all(
                op.get("injection", {}).get("caught", False)
                for op in row["ops"]
                if "injection" in op
            )
        return all(op["status"] == STATUS_COMPLETED for op in row["ops"])

    # -- one operation ------------------------------------------------------

    def _run_op(self, client: PlaneClient, session, op: OpSpec, outputs) -> dict:
        endpoint = op.endpoint
        if endpoint is not None and self.endpoint_override is not None:
            endpoint = self.endpoint_override
        op = OpSpec(
            action=op.action,
            obj=op.obj,
            path_prefixes=op.path_prefixes,
            command=op.command,
            endpoint=endpoint,
            origin=op.origin,
            task_consistent=op.task_consistent,
            cross_boundary=op.cross_boundary,
            chained=op.chained,
            arguments=op.arguments,
            compose_summary=op.compose_summary,
            ttl_ms=DROP_TTL_MS if self.inject == "drop" else op.ttl_ms,
        )
        arguments = dict(op.arguments)
        if op.compose_summary:
            arguments["content"] = _compose_summary(outputs)

        request = build_request(
            session, op.action, op.obj, _op_scope(op), _op_context(op), ttl_ms=op.ttl_ms
        )
        row: dict = {
            "action": op.action,
            "obj": op.obj,
            "seq": request.seq,
            "decision": None,
            "status": None,
            "authorize_us": 0,
            "execute_us": 0,
            "complete_us": 0,
        }
        if op.endpoint is not None:
            row["endpoint"] = op.endpoint

        t0 = _now_us()
        reply = client.submit(session, request)
        row["authorize_us"] = _now_us() - t0

        if reply.get("type") == "denial":
            row["decision"] = reply["decision"]
            row["status"] = "denied"
            return row
        if reply.get("type") == "error":
            row["decision"] = None
            row["status"] = f"rejected:{reply.get('code')}"
            row["detail"] = reply.get("detail", "")
            return row
        if reply.get("type") == "ticket":
            grant = self._confirm_ticket(client, reply["ticket"], row)
            if grant is None:
                return row
        else:
            grant = reply["grant"]
            row["decision"] = grant["decision"]

        if self.inject == "drop":
            return self._drop_injection(session, request, row)

        if op.endpoint is not None:
            return self._run_remote(client, request, grant, op, arguments, row)
        return self._run_local(client, request, grant, op, arguments, row, outputs)

    def _confirm_ticket(self, client: PlaneClient, ticket: dict, row: dict):
        row["decision"] = Decision.UC.value
        row["ticket_id"] = ticket["ticket_id"]
        if self.confirm in ("approve", "deny"):
            _post_confirm(self.stack.console_url, ticket["ticket_id"], self.confirm)
        wait_ms = max(ticket["expires_at"] - ticket["created_at"], 1) + 2_000
        state = client.await_ticket(ticket["ticket_id"], timeout_ms=wait_ms)
        if state.get("state") == "approved":
            return state["grant"]
        row["status"] = state.get("state", "pending")
        return None

    def _drop_injection(self, session, request, row: dict) -> dict:
        res = _await_terminal(self.root / "evidence.log", session.sid, request.seq)
        row["status"] = "dropped"
        row["injection"] = {
            "mode": "drop",
            "caught": res == evidence.RES_FAILED,
            "detail": f"sweeper closed the lifecycle as {res}",
        }
        return row

    # -- local execution -----------------------------------------------------

    def _run_local(self, client, request, grant, op: OpSpec, arguments, row, outputs) -> dict:
        if self.inject == "tamper":
            return self._local_tamper(client, request, grant, op, arguments, row)
        if self.inject == "replay":
            return self._local_replay(client, request, grant, op, arguments, row)
        if self.inject == "broaden":
            return self._local_broaden(client, request, grant, op, arguments, row)

        t0 = _now_us()
        if grant["decision"] == Decision.REE.value:
            # Ordinary path: the plane's own decision says no isolation or
            # verification is needed; the executor still confines paths.
            outcome = self.executor.perform(op.action, op.obj, arguments)
        else:
            outcome = self.executor.run(ScopedAction.from_request(grant, request, arguments))
        row["execute_us"] = _now_us() - t0

        wire_outcome = outcome.to_wire()
        t1 = _now_us()
        client.report(grant["grant_id"], wire_outcome, self.executor_key)
        row["complete_us"] = _now_us() - t1
        row["status"] = outcome.status
        if outcome.status != STATUS_COMPLETED:
            row["detail"] = outcome.detail
        if outcome.status == STATUS_COMPLETED:
            outputs.append((op.obj, wire_outcome))
        return row

    def _local_tamper(self, client, request, grant, op, arguments, row) -> dict:
        tampered = dict(grant)
        flipped = "0" if tampered["mac"][0] != "0" else "1"
        tampered["mac"] = flipped + tampered["mac"][1:]
        t0 = _now_us()
        outcome = self.executor.run(ScopedAction.from_request(tampered, request, arguments))
        row["execute_us"] = _now_us() - t0
        t1 = _now_us()
        client.report(grant["grant_id"], outcome.to_wire(), self.executor_key)
        row["complete_us"] = _now_us() - t1
        row["status"] = outcome.status
        row["injection"] = {
            "mode": "tamper",
            "caught": outcome.status == STATUS_REJECTED and "bad_mac" in outcome.detail,
            "detail": outcome.detail,
        }
        return row

    def _local_replay(self, client, request, grant, op, arguments, row) -> dict:
        t0 = _now_us()
        first = self.executor.run(ScopedAction.from_request(grant, request, arguments))
        second = self.executor.run(ScopedAction.from_request(grant, request, arguments))
        row["execute_us"] = _now_us() - t0
        t1 = _now_us()
        client.report(grant["grant_id"], first.to_wire(), self.executor_key)
        row["complete_us"] = _now_us() - t1
        row["status"] = second.status
        row["injection"] = {
            "mode": "replay",
            "caught": first.status == STATUS_COMPLETED
            and second.status == STATUS_REJECTED
            and "replayed" in second.detail,
            "detail": second.detail,
        }
        return row

    def _local_broaden(self, client, request, grant, op, arguments, row) -> dict:
        action = ScopedAction(
            grant=grant,
            request_bytes=canonical_encode(request),
            action=op.action,
            object=BROADEN_TARGET,
            arguments=arguments,
        )
        t0 = _now_us()
        outcome = self.executor.run(action)
        row["execute_us"] = _now_us() - t0
        t1 = _now_us()
        client.report(grant["grant_id"], outcome.to_wire(), self.executor_key)
        row["complete_us"] = _now_us() - t1
        row["status"] = outcome.status
        row["injection"] = {
            "mode": "broaden",
            "caught": outcome.status == STATUS_INCONSISTENT,
            "detail": outcome.detail,
        }
        return row

    # -- remote execution ------------------------------------------------------

    def _command_spec(self, request, op: OpSpec, arguments: dict) -> dict:
        return {
            "request": request.to_wire(),
            "action": op.action,
            "object": op.obj,
            "arguments": arguments,
        }

    def _run_remote(self, client, request, grant, op: OpSpec, arguments, row) -> dict:
        spec = self._command_spec(request, op, arguments)
        if self.inject == "tamper":
            return self._remote_tamper(client, request, grant, op, arguments, row)
        if self.inject == "broaden":
            spec = dict(spec, object=BROADEN_TARGET)
        reply = client.remote_execute(grant["grant_id"], spec)
        if reply.get("type") != "result":
            row["status"] = f"rejected:{reply.get('code')}"
            row["detail"] = reply.get("detail", "")
            return row
        outcome = reply["outcome"]
        phases = reply["phases"]
        row["execute_us"] = phases["execute_us"]
        row["complete_us"] = phases["complete_us"]
        row["status"] = outcome.get("status")
        if self.inject == "broaden":
            row["injection"] = {
                "mode": "broaden",
                "caught": outcome.get("status") == STATUS_INCONSISTENT,
                "detail": outcome.get("detail", ""),
            }
            return row
        if self.inject == "replay":
            again = client.remote_execute(grant["grant_id"], spec)
            caught = again.get("type") == "error" and again.get("code") in (
                "AlreadyClosed",
                "UnknownGrant",
            )
            row["injection"] = {
                "mode": "replay",
                "caught": outcome.get("status") == STATUS_COMPLETED and caught,
                "detail": again.get("detail", ""),
            }
            return row
        if outcome.get("status") != STATUS_COMPLETED:
            row["detail"] = outcome.get("detail", "")
        return row

    def _remote_tamper(self, client, request, grant, op, arguments, row) -> dict:
        spec = self._command_spec(request, op, arguments)
        spec["request"] = dict(spec["request"], obj=spec["request"]["obj"] + "-tampered")
        reply = client.remote_execute(grant["grant_id"], spec)
        caught = reply.get("type") == "error" and reply.get("code") == "MalformedRequest"
        # Close the lifecycle: the injected dispatch never happened.
        client.report(
            grant["grant_id"],
            {"status": "failed", "detail": "dispatch aborted by tamper rejection"},
            self.executor_key,
        )
        row["status"] = "rejected" if caught else reply.get("type", "unknown")
        row["injection"] = {
            "mode": "tamper",
            "caught": caught,
            "detail": reply.get("detail", ""),
        }
        return row


# -- baseline runner -----------------------------------------------------------


class BaselineRunner:
    """Direct execution against the fixture trees, no plane anywhere."""

    def __init__(self, root: Path):
        self.root = root
        self._executors: dict[str, ConstrainedExecutor] = {}

    def _executor_for(self, endpoint: str | None) -> ConstrainedExecutor:
        key = endpoint or "local"
        if key not in self._executors:
            sandbox = (
                self.root / "fixtures" / "local"
                if endpoint is None
                else self.root / "fixtures" / "endpoints" / endpoint
            )
            self._executors[key] = ConstrainedExecutor(
                sandbox_root=sandbox,
                channel_key=b"baseline",
                journal_path=self.root / "run" / f"baseline-{key}.journal",
            )
        return self._executors[key]

    def run_task(self, task: TaskSpec) -> dict:
        outputs: list[tuple[str, dict]] = []
        op_rows = []
        t_task = _now_us()
        for index, op in enumerate(task.ops):
            executor = self._executor_for(op.endpoint)
            arguments = dict(op.arguments)
            if op.compose_summary:
                arguments["content"] = _compose_summary(outputs)
            t0 = _now_us()
            if op.action == "send":
                # No plane, no boundary: model exfiltration as reading the
                # bytes that would leave the machine.
                outcome = executor.perform("read", op.obj, {})
            else:
                outcome = executor.perform(op.action, op.obj, arguments)
            duration = _now_us() - t0
            wire_outcome = outcome.to_wire()
            if outcome.status == STATUS_COMPLETED:
                outputs.append((op.obj, wire_outcome))
            op_row = {
                "i": index,
                "action": op.action,
                "obj": op.obj,
                "status": outcome.status,
                "duration_us": duration,
            }
            if outcome.status != STATUS_COMPLETED:
                op_row["detail"] = outcome.detail
            if op.endpoint is not None:
                op_row["endpoint"] = op.endpoint
            op_rows.append(op_row)
        total = _now_us() - t_task
        return {
            "task": task.task_id,
            "title": task.title,
            "mode": "baseline",
            "ops": op_rows,
            "authorize_us": 0,
            "execute_us": 0,
            "complete_us": 0,
            "total_us": total,
            "ok": True,
        }


# -- suite entry points ----------------------------------------------------------


def run_suite(
    root: str | Path,
    tasks: str | list[TaskSpec] = "all",
    mode: str = "protected",
    policy_path: str | Path | None = None,
    inject: str = "none",
    report_path: str | Path | None = None,
    parallel: bool = False,
    profiles: dict[str, str] | None = None,
    endpoint_override: str | None = None,
    confirm: str = "wait",
    console_port: int = 0,
) -> dict:
    """Run the selected tasks and return the report document."""
    if mode not in ("baseline", "protected"):
        raise ValueError(f"unknown mode {mode!r}")
    if inject not in INJECT_MODES:
        raise ValueError(f"unknown injection mode {inject!r}")
    root = Path(root)
    keyring_path = root / "keys" / "keyring.json"
    if not keyring_path.exists():
        raise FixtureMissing(f"no keyring at {keyring_path}; run init first")
    task_list = select_tasks(tasks) if isinstance(tasks, str) else list(tasks)

    # Reseed fixture content so every run starts from identical trees.
    fixtures.init_fixtures(root)
    protected_before = fixtures.protected_digests(root)

    started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    report: dict = {
        "schema": REPORT_SCHEMA,
        "mode": mode,
        "inject": inject,
        "started_at": started,
        "tasks": [],
    }

    if mode == "baseline":
        runner = BaselineRunner(root)
        report["tasks"] = [runner.run_task(task) for task in task_list]
        drift = _protected_drift(protected_before, fixtures.protected_digests(root))
        report["protected_drift"] = drift
        report["ok"] = all(row["ok"] for row in report["tasks"])
    else:
        keyring = json.loads(keyring_path.read_text(encoding="utf-8"))
        with spawn_stack(root, policy_path=Path(policy_path) if policy_path else None,
                         profiles=profiles, console_port=console_port) as stack:
            runner = ProtectedRunner(
                root,
                stack,
                executor_key=bytes.fromhex(keyring["executor_key"]),
                inject=inject,
                confirm=confirm,
                endpoint_override=endpoint_override,
            )
            if parallel:
                with ThreadPoolExecutor(max_workers=max(len(task_list), 1)) as pool:
                    report["tasks"] = list(
                        pool.map(lambda t: runner.run_task(t, track_receipts=False), task_list)
                    )
            else:
                report["tasks"] = [runner.run_task(task) for task in task_list]
        drift = _protected_drift(protected_before, fixtures.protected_digests(root))
        chain = evidence.verify_file(root / "evidence.log")
        report["protected_drift"] = drift
        report["evidence"] = chain.to_doc()
        report["ok"] = (
            all(row["ok"] for row in report["tasks"]) and not drift and chain.valid
        )

    if report_path is not None:
        report_file = Path(report_path)
        report_file.parent.mkdir(parents=True, exist_ok=True)
        report_file.write_bytes(canonical.encode(report) + b"\n")
    return report


def _protected_drift(before: dict, after: dict) -> list[str]:
    return sorted(
        name for name in before if after.get(name) != before[name]
    ) + sorted(name for name in after if name not in before)


def timings_from_report(report: dict) -> list[PhaseTiming]:
    return [
        PhaseTiming(
            task_id=row["task"],
            mode=row["mode"],
            authorize_us=row["authorize_us"],
            execute_us=row["execute_us"],
            complete_us=row["complete_us"],
            total_us=row["total_us"],
        )
        for row in report["tasks"]
    ]


def emit_latency_report(timings: list[PhaseTiming]) -> tuple[str, dict]:
    """Stacked per-task phase table plus a machine-readable document.

    Absolute values are machine-local; only the phase structure is meant to
    be compared across runs or modes.
    """
    header = f"{'task':8} {'mode':10} {'authorize':>12} {'execute':>12} {'complete':>12} {'total':>12}"
    lines = [header, "-" * len(header)]
    for t in timings:
        if t.mode == "baseline":
            lines.append(
                f"{t.task_id:8} {t.mode:10} {'-':>12} {'-':>12} {'-':>12} {t.total_us / 1000:>10.2f}ms"
            )
        else:
            lines.append(
                f"{t.task_id:8} {t.mode:10} {t.authorize_us / 1000:>10.2f}ms {t.execute_us / 1000:>10.2f}ms "
                f"{t.complete_us / 1000:>10.2f}ms {t.total_us / 1000:>10.2f}ms"
            )
    doc = {"schema": "opplane-latency/1", "rows": [t.to_row() for t in timings]}
    return "\n".join(lines), doc
