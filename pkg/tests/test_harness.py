"""Fixture trees, baseline runner, and the workload harness plumbing."""

from __future__ import annotations

import base64
import json

import pytest

from opplane import fixtures
from opplane.harness import (
    BaselineRunner,
    FixtureMissing,
    PhaseTiming,
    _compose_summary,
    _headline_decision,
    emit_latency_report,
    run_suite,
    spawn_stack,
    timings_from_report,
)
from opplane.tasks import TASK_INDEX

WS = "/workspace/django"


@pytest.fixture
def root(tmp_path):
    run_root = tmp_path / "runroot"
    fixtures.init_fixtures(run_root)
    fixtures.init_keys(run_root)
    fixtures.init_policy(run_root)
    return run_root


class TestFixtureTrees:
    def test_init_restores_mutated_content(self, root):
        passwd = root / "fixtures" / "local" / "etc" / "passwd"
        original = passwd.read_bytes()
        passwd.write_text("pwned:x:0:0::/:/bin/sh\n", encoding="utf-8")
        fixtures.init_fixtures(root)
        assert passwd.read_bytes() == original

    def test_init_is_idempotent(self, root):
        first = fixtures.init_fixtures(root)
        second = fixtures.init_fixtures(root)
        assert first == second
        assert first["schema"] == "opplane-manifest/1"
        on_disk = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
        assert on_disk == second

    def test_manifest_covers_local_and_endpoint_trees(self, root):
        manifest = fixtures.build_manifest(root)
        names = set(manifest["files"])
        assert "local/workspace/django/README.rst" in names
        assert "local/etc/passwd" in names
        assert "endpoints/pi-01/etc/os-release" in names
        assert "endpoints/hifive-01/etc/shadow" in names

    def test_protected_digests_track_every_protected_file(self, root):
        digests = fixtures.protected_digests(root)
        # 7 protected files locally and on each of the two endpoints
        assert len(digests) == 21
        assert all(len(d) == 64 for d in digests.values())
        sshd = root / "fixtures" / "local" / "etc" / "ssh" / "sshd_config"
        before = digests["local/etc/ssh/sshd_config"]
        sshd.write_text("Port 2222\n", encoding="utf-8")
        after = fixtures.protected_digests(root)
        assert after["local/etc/ssh/sshd_config"] != before

    def test_keys_are_minted_once(self, root):
        first = json.loads((root / "keys" / "keyring.json").read_text(encoding="utf-8"))
        again = fixtures.init_keys(root)
        assert again == first
        assert len(bytes.fromhex(first["executor_key"])) == 32
        assert set(first["endpoints"]) == {"pi-01", "hifive-01"}
        side_copy = json.loads(
            (root / "endpoints" / "pi-01.keyring.json").read_text(encoding="utf-8")
        )
        assert side_copy == {"endpoint_id": "pi-01", "key": first["endpoints"]["pi-01"]["key"]}


class TestSummaryComposition:
    def test_composes_from_read_outputs(self):
        blob = base64.b64encode(b"hello\nworld").decode("ascii")
        text = _compose_summary(
            [
                ("a.txt", {"output_b64": blob}),
                ("b.bin", {"output_digest": "ab" * 32}),
            ]
        )
        assert text == (
            "collected 2 sources\n"
            "a.txt: 11 chars, starts 'hello'\n"
            "b.bin: digest abababababababab\n"
        )

    def test_empty_outputs(self):
        assert _compose_summary([]) == "collected 0 sources\n\n"

    def test_outputless_outcomes_are_skipped(self):
        assert _compose_summary([("x", {"status": "completed"})]) == "collected 0 sources\n\n"


class TestHeadlineDecision:
    def test_most_severe_wins(self):
        assert _headline_decision(["d_ree", "d_ia", "d_ree"]) == "d_ia"
        assert _headline_decision(["d_uc", "d_deny", "d_ree"]) == "d_deny"
        assert _headline_decision(["d_ie", "d_ia"]) == "d_ie"

    def test_unknown_and_empty_inputs(self):
        assert _headline_decision([]) is None
        assert _headline_decision(["bogus"]) is None


class TestLatencyReporting:
    def test_to_row_round_trip(self):
        timing = PhaseTiming("W1-1", "protected", 1200, 3400, 500, 5100)
        assert timing.to_row() == {
            "task": "W1-1",
            "mode": "protected",
            "authorize_us": 1200,
            "execute_us": 3400,
            "complete_us": 500,
            "total_us": 5100,
        }

    def test_timings_from_report(self):
        report = {
            "tasks": [
                {
                    "task": "W1-1",
                    "mode": "protected",
                    "authorize_us": 10,
                    "execute_us": 20,
                    "complete_us": 5,
                    "total_us": 35,
                }
            ]
        }
        (timing,) = timings_from_report(report)
        assert timing == PhaseTiming("W1-1", "protected", 10, 20, 5, 35)

    def test_emit_renders_baseline_without_phase_columns(self):
        timings = [
            PhaseTiming("W1-1", "protected", 1000, 2000, 500, 3500),
            PhaseTiming("W1-1", "baseline", 0, 0, 0, 4200),
        ]
        text, doc = emit_latency_report(timings)
        lines = text.splitlines()
        assert "authorize" in lines[0]
        assert "1.00ms" in lines[2] and "3.50ms" in lines[2]
        baseline_line = lines[3]
        assert baseline_line.count(" -") >= 3
        assert "4.20ms" in baseline_line
        assert doc["schema"] == "opplane-latency/1"
        assert doc["rows"] == [t.to_row() for t in timings]


class TestSuiteValidation:
    def test_unknown_mode(self, root):
        with pytest.raises(ValueError, match="unknown mode 'fast'"):
            run_suite(root, mode="fast")

    def test_unknown_injection(self, root):
        with pytest.raises(ValueError, match="unknown injection mode 'explode'"):
            run_suite(root, inject="explode")

    def test_missing_keyring(self, tmp_path):
        bare = tmp_path / "bare"
        fixtures.init_fixtures(bare)
        with pytest.raises(FixtureMissing, match="run init first"):
            run_suite(bare, tasks="W1-1", mode="baseline")

    def test_missing_endpoint_keyring(self, root):
        # sorted first, so it fails before anything is spawned
        (root / "endpoints" / "hifive-01.keyring.json").unlink()
        with pytest.raises(FixtureMissing, match="no endpoint keyring"):
            spawn_stack(root)


class TestBaselineRunner:
    def test_document_task_runs_and_writes_summary(self, root):
        runner = BaselineRunner(root)
        row = runner.run_task(TASK_INDEX["W1-1"])
        assert row["mode"] == "baseline"
        assert row["ok"] is True
        assert [op["status"] for op in row["ops"]] == ["completed"] * 4
        assert row["authorize_us"] == 0
        assert row["execute_us"] == 0
        assert row["complete_us"] == 0
        assert row["total_us"] > 0
        summary = root / "fixtures" / "local" / "workspace" / "django" / "output" / "summary.txt"
        assert summary.read_text(encoding="utf-8").startswith("collected 3 sources\n")

    def test_copy_then_rename_chain(self, root):
        runner = BaselineRunner(root)
        row = runner.run_task(TASK_INDEX["W1-2"])
        assert row["ok"] is True
        archived = (
            root
            / "fixtures"
            / "local"
            / "workspace"
            / "django"
            / "output"
            / "review"
            / "intro-archived.txt"
        )
        assert "Introduction" in archived.read_text(encoding="utf-8")

    def test_remote_task_hits_endpoint_tree_directly(self, root):
        runner = BaselineRunner(root)
        row = runner.run_task(TASK_INDEX["W2-2"])
        assert row["ok"] is True
        bashrc = root / "fixtures" / "endpoints" / "pi-01" / "home" / ".bashrc"
        assert "alias ll" in bashrc.read_text(encoding="utf-8")

    def test_send_is_modeled_as_a_read(self, root):
        runner = BaselineRunner(root)
        row = runner.run_task(TASK_INDEX["W3-4"])
        assert row["ok"] is True
        assert row["ops"][0]["status"] == "completed"

    def test_suite_records_unguarded_protected_drift(self, root):
        report = run_suite(root, tasks="W2-3", mode="baseline")
        assert report["mode"] == "baseline"
        assert report["inject"] == "none"
        # the baseline happily rewrote the protected sshd config
        assert report["protected_drift"] == ["local/etc/ssh/sshd_config"]
        assert report["ok"] is True
        assert report["tasks"][0]["task"] == "W2-3"

    def test_suite_reseeds_fixtures_between_runs(self, root):
        run_suite(root, tasks="W2-3", mode="baseline")
        report = run_suite(root, tasks="W1-1", mode="baseline")
        # drift from the previous run was reset before this one
        assert report["protected_drift"] == []


class TestProtectedSuite:
    def test_small_mixed_run(self, root, tmp_path):
        report_path = tmp_path / "out" / "report.json"
        report = run_suite(
            root, tasks="W1-1,W2-3", mode="protected", report_path=report_path
        )
        assert report["ok"] is True
        assert report["protected_drift"] == []
        assert report["evidence"]["valid"] is True

        by_id = {row["task"]: row for row in report["tasks"]}
        benign = by_id["W1-1"]
        assert benign["decision"] == "d_ree"
        assert benign["ok"] is True
        assert [op["status"] for op in benign["ops"]] == ["completed"] * 4
        assert benign["executor_executions"] == 4
        assert benign["authorize_us"] > 0
        assert benign["total_us"] == (
            benign["authorize_us"] + benign["execute_us"] + benign["complete_us"]
        )

        denied = by_id["W2-3"]
        assert denied["decision"] == "d_deny"
        assert denied["ok"] is True
        assert denied["execute_us"] == 0
        assert denied["complete_us"] == 0
        assert denied["executor_executions"] == 0
        assert denied["endpoint_receipts"] == 0
        assert denied["ops"][0]["status"] == "denied"

        saved = json.loads(report_path.read_text(encoding="utf-8"))
        assert saved["schema"] == "opplane-report/1"
        assert saved["ok"] is True
