/** Wire shapes served by the plane's console API, with runtime guards.
 *
 * The console is a viewer plus a yes/no switch: it renders what the plane
 * reports and posts back only ticket ids and decisions. Nothing here ever
 * carries operation parameters toward the plane.
 */

export type Scope = {
  path_prefixes: string[];
  command_patterns: string[];
  endpoint?: string;
};

export type TicketState = "pending" | "approved" | "denied" | "expired";

export type Ticket = {
  ticket_id: string;
  sid: string;
  seq: number;
  act: string;
  obj: string;
  level: string;
  approved_scope: Scope;
  created_at: number;
  expires_at: number;
  state: TicketState;
};

export type EvidenceRecord = {
  sid: string;
  act: string;
  obj: string;
  scope: Scope;
  level: string;
  seq: number;
  dec: string;
  ts: { wall: string; ctr: number };
  res: string;
  prev_hash: string;
  record_hash: string;
};

export type ChainDoc = {
  records_checked: number;
  chain_valid: boolean;
  first_break: number | null;
  break_reason: string | null;
  lifecycle_errors: string[];
  open_lifecycles: string[];
  valid: boolean;
  strict_valid: boolean;
};

export type PlaneEvent = {
  event_id: number;
  kind: "evidence" | "grant" | "ticket";
  data: Record<string, unknown>;
};

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function isStringArray(value: unknown): value is string[] {
  return Array.isArray(value) && value.every((v) => typeof v === "string");
}

export function parseScope(value: unknown): Scope | null {
  if (!isRecord(value)) return null;
  const prefixes = value["path_prefixes"] ?? [];
  const patterns = value["command_patterns"] ?? [];
  if (!isStringArray(prefixes) || !isStringArray(patterns)) return null;
  const scope: Scope = { path_prefixes: prefixes, command_patterns: patterns };
  if (typeof value["endpoint"] === "string") scope.endpoint = value["endpoint"];
  return scope;
}

const TICKET_STATES: readonly string[] = ["pending", "approved", "denied", "expired"];

export function parseTicket(value: unknown): Ticket | null {
  if (!isRecord(value)) return null;
  const scope = parseScope(value["approved_scope"]);
  if (
    typeof value["ticket_id"] !== "string" ||
    typeof value["sid"] !== "string" ||
    typeof value["seq"] !== "number" ||
    typeof value["act"] !== "string" ||
    typeof value["obj"] !== "string" ||
    typeof value["level"] !== "string" ||
    typeof value["created_at"] !== "number" ||
    typeof value["expires_at"] !== "number" ||
    typeof value["state"] !== "string" ||
    !TICKET_STATES.includes(value["state"]) ||
    scope === null
  ) {
    return null;
  }
  return {
    ticket_id: value["ticket_id"],
    sid: value["sid"],
    seq: value["seq"],
    act: value["act"],
    obj: value["obj"],
    level: value["level"],
    approved_scope: scope,
    created_at: value["created_at"],
    expires_at: value["expires_at"],
    state: value["state"] as TicketState,
  };
}

export function parseEvidenceRecord(value: unknown): EvidenceRecord | null {
  if (!isRecord(value)) return null;
  const scope = parseScope(value["scope"]);
  const ts = value["ts"];
  if (
    typeof value["sid"] !== "string" ||
    typeof value["act"] !== "string" ||
    typeof value["obj"] !== "string" ||
    typeof value["level"] !== "string" ||
    typeof value["seq"] !== "number" ||
    typeof value["dec"] !== "string" ||
    typeof value["res"] !== "string" ||
    typeof value["prev_hash"] !== "string" ||
    typeof value["record_hash"] !== "string" ||
    scope === null ||
    !isRecord(ts) ||
    typeof ts["wall"] !== "string" ||
    typeof ts["ctr"] !== "number"
  ) {
    return null;
  }
  return {
    sid: value["sid"],
    act: value["act"],
    obj: value["obj"],
    scope,
    level: value["level"],
    seq: value["seq"],
    dec: value["dec"],
    ts: { wall: ts["wall"], ctr: ts["ctr"] },
    res: value["res"],
    prev_hash: value["prev_hash"],
    record_hash: value["record_hash"],
  };
}

export function parseChainDoc(value: unknown): ChainDoc | null {
  if (!isRecord(value)) return null;
  if (
    typeof value["records_checked"] !== "number" ||
    typeof value["chain_valid"] !== "boolean" ||
    typeof value["valid"] !== "boolean" ||
    typeof value["strict_valid"] !== "boolean" ||
    !isStringArray(value["lifecycle_errors"]) ||
    !isStringArray(value["open_lifecycles"])
  ) {
    return null;
  }
  const firstBreak = value["first_break"];
  const breakReason = value["break_reason"];
  return {
    records_checked: value["records_checked"],
    chain_valid: value["chain_valid"],
    first_break: typeof firstBreak === "number" ? firstBreak : null,
    break_reason: typeof breakReason === "string" ? breakReason : null,
    lifecycle_errors: value["lifecycle_errors"],
    open_lifecycles: value["open_lifecycles"],
    valid: value["valid"],
    strict_valid: value["strict_valid"],
  };
}

export function parsePlaneEvent(value: unknown): PlaneEvent | null {
  if (!isRecord(value)) return null;
  const kind = value["kind"];
  if (
    typeof value["event_id"] !== "number" ||
    (kind !== "evidence" && kind !== "grant" && kind !== "ticket") ||
    !isRecord(value["data"])
  ) {
    return null;
  }
  return { event_id: value["event_id"], kind, data: value["data"] };
}
