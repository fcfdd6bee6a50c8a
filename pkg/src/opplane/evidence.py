"""Hash-chained, append-only evidence log.

Each security-relevant event appends one record carrying the session id,
action, object, approved scope, assessed level, sequence number, decision,
a timestamp, and a result state. Records are chained: every record stores
the hash of its predecessor, and its own hash covers its canonical encoding
concatenated with that predecessor hash. Any mutation, reordering, or
interior deletion of the stored log breaks recomputation at a specific
index. The log lives outside the plane process as one canonical JSON record
per line, so a host compromise can destroy it but not silently rewrite it.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from . import canonical

RES_PENDING = "pending"
RES_COMPLETED = "completed"
RES_FAILED = "failed"
RES_REJECTED = "rejected"
RES_DENIED = "denied"
RES_INCONSISTENT = "inconsistent"

TERMINAL_RES = frozenset(
    {RES_COMPLETED, RES_FAILED, RES_REJECTED, RES_DENIED, RES_INCONSISTENT}
)

RECORD_FIELDS = (
    "sid",
    "act",
    "obj",
    "scope",
    "level",
    "seq",
    "dec",
    "ts",
    "res",
    "prev_hash",
    "record_hash",
)


def compute_record_hash(fields: dict, prev_hash: bytes) -> str:
    """SHA-256 over canonical(record without record_hash) || prev_hash."""
    body = {k: v for k, v in fields.items() if k != "record_hash"}
    return hashlib.sha256(canonical.encode(body) + prev_hash).hexdigest()


class EvidenceError(RuntimeError):
    pass


class EvidenceWriter:
    """Single-writer appender that maintains the chain head and the file."""

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._lock = threading.Lock()
        self._records: list[dict] = []
        self._prev = canonical.GENESIS_HASH
        if self._path.exists():
            for rec in load_records(self._path):
                self._records.append(rec)
                self._prev = bytes.fromhex(rec["record_hash"])
        else:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._path.touch()

    @property
    def path(self) -> Path:
        return self._path

    def append(
        self,
        sid: str,
        act: str,
        obj: str,
        scope: dict,
        level: str,
        seq: int,
        dec: str,
        ts: dict,
        res: str,
    ) -> dict:
        if res != RES_PENDING and res not in TERMINAL_RES:
            raise EvidenceError(f"unknown result state {res!r}")
        with self._lock:
            record = {
                "sid": sid,
                "act": act,
                "obj": obj,
                "scope": scope,
                "level": level,
                "seq": seq,
                "dec": dec,
                "ts": ts,
                "res": res,
                "prev_hash": self._prev.hex(),
            }
            record["record_hash"] = compute_record_hash(record, self._prev)
            line = canonical.encode(record) + b"\n"
            with open(self._path, "ab") as fh:
                fh.write(line)
            self._records.append(record)
            self._prev = bytes.fromhex(record["record_hash"])
            return record

    def records(self) -> list[dict]:
        with self._lock:
            return list(self._records)


def load_records(path: str | Path) -> list[dict]:
    records = []
    text = Path(path).read_text(encoding="utf-8")
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            # Keep the slot so verification fails at this index.
            records.append({"_unparsable": line, "_index": i})
    return records


@dataclass
class ChainReport:
    records_checked: int = 0
    chain_valid: bool = True
    first_break: int | None = None
    break_reason: str | None = None
    lifecycle_errors: list[str] = field(default_factory=list)
    open_lifecycles: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        """Chain integrity plus lifecycle consistency (open lifecycles allowed)."""
        return self.chain_valid and not self.lifecycle_errors

    @property
    def strict_valid(self) -> bool:
        """Also requires every accepted operation to have reached a terminal state."""
        return self.valid and not self.open_lifecycles

    def to_doc(self) -> dict:
        return {
            "records_checked": self.records_checked,
            "chain_valid": self.chain_valid,
            "first_break": self.first_break,
            "break_reason": self.break_reason,
            "lifecycle_errors": list(self.lifecycle_errors),
            "open_lifecycles": list(self.open_lifecycles),
            "valid": self.valid,
            "strict_valid": self.strict_valid,
        }


def verify_chain(records: list[dict], expected_head: str | None = None) -> ChainReport:
    """Recompute every link and hash; then cross-check operation lifecycles.

    The chain pass reports the first index where recomputation breaks. An
    expected_head (the hex hash of the newest record the auditor trusts)
    additionally pins the end of the chain, so deleting trailing records is
    detected as a break at the first missing index. The lifecycle pass groups
    records by (sid, seq) and enforces: a lifecycle opens with a pending
    record and closes with exactly one terminal record; denied lifecycles
    never contain a completion; standalone rejected records are terminal on
    their own (replayed or malformed submissions).
    """
    report = ChainReport(records_checked=len(records))
    prev = canonical.GENESIS_HASH
    for i, rec in enumerate(records):
        problem = _record_problem(rec, prev)
        if problem is not None:
            report.chain_valid = False
            report.first_break = i
            report.break_reason = problem
            return report
        prev = bytes.fromhex(rec["record_hash"])

    if expected_head is not None and prev.hex() != expected_head.lower():
        report.chain_valid = False
        report.first_break = len(records)
        report.break_reason = "chain head differs from expected head"
        return report

    lifecycles: dict[tuple[str, int], list[dict]] = {}
    for rec in records:
        lifecycles.setdefault((rec["sid"], rec["seq"]), []).append(rec)

    for (sid, seq), group in sorted(lifecycles.items()):
        label = f"{sid}/{seq}"
        closed = False
        opened = False
        denied = False
        for rec in group:
            res = rec["res"]
            if res == RES_PENDING:
                if closed:
                    report.lifecycle_errors.append(f"{label}: pending after terminal")
                opened = True
                continue
            if res == RES_REJECTED and (closed or not opened):
                # Terminal record of a distinct rejected submission.
                continue
            if closed:
                report.lifecycle_errors.append(f"{label}: second terminal {res}")
                continue
            closed = True
            if res == RES_DENIED:
                denied = True
        if denied and any(r["res"] == RES_COMPLETED for r in group):
            report.lifecycle_errors.append(f"{label}: denied lifecycle has completion")
        if opened and not closed:
            report.open_lifecycles.append(label)
    return report


def _record_problem(rec, prev: bytes) -> str | None:
    if not isinstance(rec, dict):
        return "record is not an object"
    if "_unparsable" in rec:
        return "unparsable record"
    missing = [f for f in RECORD_FIELDS if f not in rec]
    if missing:
        return f"missing fields: {missing}"
    unknown = set(rec) - set(RECORD_FIELDS)
    if unknown:
        return f"unknown fields: {sorted(unknown)}"
    if rec["prev_hash"] != prev.hex():
        return "previous-hash link mismatch"
    try:
        expected = compute_record_hash(rec, prev)
    except canonical.CanonicalEncodingError as exc:
        return f"unencodable record: {exc}"
    if rec["record_hash"] != expected:
        return "record hash mismatch"
    if rec["res"] != RES_PENDING and rec["res"] not in TERMINAL_RES:
        return f"unknown result state {rec['res']!r}"
    return None


def verify_file(path: str | Path, expected_head: str | None = None) -> ChainReport:
    return verify_chain(load_records(path), expected_head=expected_head)
