import { ChainDoc, EvidenceRecord, Ticket } from "../src/types.js";

export function makeTicket(overrides: Partial<Ticket> = {}): Ticket {
  return {
    ticket_id: "t-0011aabb",
    sid: "s-1234",
    seq: 3,
    act: "send",
    obj: "~/.bashrc",
    level: "L3",
    approved_scope: { path_prefixes: ["~/.bashrc"], command_patterns: [] },
    created_at: 1_000_000,
    expires_at: 1_060_000,
    state: "pending",
    ...overrides,
  };
}

export function makeRecord(overrides: Partial<EvidenceRecord> = {}): EvidenceRecord {
  return {
    sid: "s-1234",
    act: "write",
    obj: "/workspace/django/tox.ini",
    scope: { path_prefixes: ["/workspace/django/tox.ini"], command_patterns: [] },
    level: "L0",
    seq: 1,
    dec: "d_ree",
    ts: { wall: "2026-08-19T12:00:00.000000Z", ctr: 1 },
    res: "pending",
    prev_hash: "00".repeat(32),
    record_hash: "ab".repeat(32),
    ...overrides,
  };
}

export function makeChain(overrides: Partial<ChainDoc> = {}): ChainDoc {
  return {
    records_checked: 12,
    chain_valid: true,
    first_break: null,
    break_reason: null,
    lifecycle_errors: [],
    open_lifecycles: [],
    valid: true,
    strict_valid: true,
    ...overrides,
  };
}
