"""Command-line front door: init, run, verify-evidence, plane, endpoint,
pending, confirm.

`init` prepares a run root (fixture trees plus channel keys). `run` drives
the workload suite and exits nonzero when any expectation fails. `plane`
and `endpoint` are the long-running processes the harness spawns; they can
also be started by hand for interactive use. `pending` and `confirm` are
the operator fallback when no graphical console is available.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading
import urllib.error
import urllib.request
from pathlib import Path

from . import evidence, fixtures, harness
from .endpoint import EndpointAgent, EndpointKeyring, EndpointServer, PROFILES
from .server import serve_plane


def _console_url(root: Path, override: str | None) -> str:
    if override:
        return override.rstrip("/")
    runtime_path = root / "run" / "plane.json"
    if not runtime_path.exists():
        raise SystemExit(f"no running plane found at {runtime_path}; start one or pass --console-url")
    runtime = json.loads(runtime_path.read_text(encoding="utf-8"))
    return runtime["console_url"].rstrip("/")


def _http_json(url: str, payload: dict | None = None) -> tuple[int, dict]:
    if payload is None:
        req = urllib.request.Request(url)
    else:
        req = urllib.request.Request(
            url,
            data=json.dumps(payload).encode("utf-8"),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        try:
            return exc.code, json.loads(exc.read().decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            return exc.code, {"error": str(exc)}


# -- subcommands ---------------------------------------------------------------


def cmd_init(args) -> int:
    root = Path(args.root)
    manifest = fixtures.init_fixtures(root)
    fixtures.init_keys(root)
    fixtures.init_policy(root)
    print(f"initialized {root}: {len(manifest['files'])} fixture files, keys and policy ready")
    return 0


def cmd_run(args) -> int:
    profiles = {}
    for item in args.profile or []:
        if "=" not in item:
            raise SystemExit(f"--profile needs id=profile, got {item!r}")
        endpoint_id, profile = item.split("=", 1)
        if profile not in PROFILES:
            raise SystemExit(f"unknown profile {profile!r}; choices: {sorted(PROFILES)}")
        profiles[endpoint_id] = profile
    try:
        report = harness.run_suite(
            root=Path(args.root),
            tasks=args.tasks,
            mode=args.mode,
            policy_path=args.policy,
            inject=args.inject,
            report_path=args.report,
            parallel=args.parallel,
            profiles=profiles or None,
            endpoint_override=args.endpoint_override,
            confirm=args.confirm,
        )
    except harness.HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    for row in report["tasks"]:
        if args.mode == "protected":
            verdict = "ok" if row["ok"] else "FAIL"
            print(
                f"{row['task']:6} decision={row['decision'] or '-':7} "
                f"expected={row['expected_decision']:7} [{verdict}]"
            )
        else:
            print(f"{row['task']:6} baseline total={row['total_us'] / 1000:.2f}ms")
    table, _ = harness.emit_latency_report(harness.timings_from_report(report))
    print()
    print(table)
    if args.mode == "protected" and "evidence" in report:
        chain = report["evidence"]
        print(
            f"\nevidence: {chain['records_checked']} records, "
            f"chain {'valid' if chain['chain_valid'] else 'BROKEN'}, "
            f"{len(chain['lifecycle_errors'])} lifecycle errors"
        )
    if report.get("protected_drift"):
        print(f"protected drift: {report['protected_drift']}")
    print(f"\nsuite {'OK' if report['ok'] else 'FAILED'}")
    return 0 if report["ok"] else 1


def cmd_verify_evidence(args) -> int:
    path = Path(args.file)
    if not path.exists():
        print(f"error: no evidence log at {path}", file=sys.stderr)
        return 2
    report = evidence.verify_file(path, expected_head=args.expect_head)
    print(f"records checked: {report.records_checked}")
    print(f"chain valid: {report.chain_valid}")
    if report.first_break is not None:
        print(f"first break: index {report.first_break} ({report.break_reason})")
    for err in report.lifecycle_errors:
        print(f"lifecycle error: {err}")
    if report.open_lifecycles:
        print(f"open lifecycles: {report.open_lifecycles}")
    print(f"verdict: {'valid' if report.valid else 'INVALID'}")
    return 0 if report.valid else 1


def cmd_plane(args) -> int:
    serve_plane(
        Path(args.root),
        policy_path=Path(args.policy) if args.policy else None,
        console_port=args.console_port,
        static_dir=Path(args.static_dir) if args.static_dir else None,
    )
    return 0


def cmd_endpoint(args) -> int:
    root = Path(args.root)
    keyring_path = root / "endpoints" / f"{args.id}.keyring.json"
    if not keyring_path.exists():
        print(f"error: no keyring at {keyring_path}; run init first", file=sys.stderr)
        return 2
    keyring = EndpointKeyring.load(keyring_path)
    run_dir = root / "run"
    run_dir.mkdir(parents=True, exist_ok=True)
    agent = EndpointAgent(
        keyring,
        fixture_root=root / "fixtures" / "endpoints" / args.id,
        profile=args.profile,
        receive_log=run_dir / f"endpoint-{args.id}.receive.log",
        journal_path=run_dir / f"endpoint-{args.id}.journal",
    )
    server = EndpointServer(agent)
    server.start()
    runtime = {
        "endpoint_id": args.id,
        "host": server.host,
        "port": server.port,
        "profile": args.profile,
    }
    (run_dir / f"endpoint-{args.id}.json").write_text(json.dumps(runtime), encoding="utf-8")
    print(f"endpoint {args.id} serving on {server.host}:{server.port} ({args.profile})")

    stop = threading.Event()

    def _terminate(signum, frame):
        stop.set()

    signal.signal(signal.SIGTERM, _terminate)
    signal.signal(signal.SIGINT, _terminate)
    try:
        while not stop.wait(0.2):
            pass
    finally:
        server.stop()
    return 0


def cmd_pending(args) -> int:
    url = _console_url(Path(args.root), args.console_url)
    status, doc = _http_json(f"{url}/api/pending")
    if status != 200:
        print(f"error: {doc}", file=sys.stderr)
        return 2
    tickets = doc.get("tickets", [])
    if not tickets:
        print("no pending confirmations")
        return 0
    for ticket in tickets:
        print(
            f"{ticket['ticket_id']}  {ticket['act']} {ticket['obj']} "
            f"level={ticket['level']} expires_at={ticket['expires_at']}"
        )
    return 0


def cmd_confirm(args) -> int:
    url = _console_url(Path(args.root), args.console_url)
    status, doc = _http_json(
        f"{url}/api/confirm", {"ticket_id": args.ticket, "decision": args.decision}
    )
    if status == 200:
        print(f"ticket {args.ticket}: {doc['state']}")
        return 0
    print(f"error ({status}): {doc.get('error')}: {doc.get('detail', '')}", file=sys.stderr)
    return 1


# -- argument parsing ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opplane",
        description="operation-centric confinement plane: fixtures, plane, endpoints, workload suite",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="create fixture trees and channel keys under a run root")
    p_init.add_argument("--root", required=True)
    p_init.set_defaults(func=cmd_init)

    p_run = sub.add_parser("run", help="run workload tasks and write a report")
    p_run.add_argument("--root", required=True)
    p_run.add_argument("--tasks", default="all", help='"all" or comma-separated ids like W1-1,W2-3')
    p_run.add_argument("--mode", choices=("baseline", "protected"), default="protected")
    p_run.add_argument("--policy", default=None)
    p_run.add_argument("--inject", choices=harness.INJECT_MODES, default="none")
    p_run.add_argument("--report", default=None)
    p_run.add_argument("--parallel", action="store_true")
    p_run.add_argument(
        "--confirm",
        choices=("wait", "approve", "deny"),
        default="wait",
        help="what to do when an operation needs human confirmation",
    )
    p_run.add_argument("--endpoint-override", default=None, help="route all remote ops to this endpoint")
    p_run.add_argument(
        "--profile",
        action="append",
        help="endpoint delay profile as id=profile (repeatable)",
    )
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify-evidence", help="check an evidence log's hash chain and lifecycles")
    p_verify.add_argument("--file", required=True)
    p_verify.add_argument(
        "--expect-head",
        default=None,
        help="hex hash of the newest trusted record; detects tail truncation",
    )
    p_verify.set_defaults(func=cmd_verify_evidence)

    p_plane = sub.add_parser("plane", help="serve the trusted plane (blocks)")
    p_plane.add_argument("--root", required=True)
    p_plane.add_argument("--policy", default=None)
    p_plane.add_argument("--console-port", type=int, default=0)
    p_plane.add_argument("--static-dir", default=None)
    p_plane.set_defaults(func=cmd_plane)

    p_endpoint = sub.add_parser("endpoint", help="serve one remote endpoint (blocks)")
    p_endpoint.add_argument("--root", required=True)
    p_endpoint.add_argument("--id", required=True)
    p_endpoint.add_argument("--profile", choices=sorted(PROFILES), default="fast-verify")
    p_endpoint.set_defaults(func=cmd_endpoint)

    p_pending = sub.add_parser("pending", help="list operations waiting for confirmation")
    p_pending.add_argument("--root", required=True)
    p_pending.add_argument("--console-url", default=None)
    p_pending.set_defaults(func=cmd_pending)

    p_confirm = sub.add_parser("confirm", help="approve or deny a pending operation")
    p_confirm.add_argument("--root", required=True)
    p_confirm.add_argument("--ticket", required=True)
    p_confirm.add_argument("--decision", choices=("approve", "deny"), required=True)
    p_confirm.add_argument("--console-url", default=None)
    p_confirm.set_defaults(func=cmd_confirm)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
