/** Typed client for the plane's console HTTP API.
 *
 * Four read endpoints and one write. The write carries exactly two fields,
 * ticket_id and decision; every detail of the operation being confirmed
 * stays on the plane side and is only ever read back for display.
 */

import {
  ChainDoc,
  EvidenceRecord,
  Ticket,
  parseChainDoc,
  parseEvidenceRecord,
  parseTicket,
} from "./types.js";

export type ConfirmDecision = "approve" | "deny";

export type ConfirmResult =
  | { kind: "resolved"; state: string; ticketId: string }
  | { kind: "conflict"; detail: string }
  | { kind: "expired"; detail: string }
  | { kind: "unknown"; detail: string }
  | { kind: "error"; detail: string };

export type EvidencePage = { records: EvidenceRecord[]; next: number };

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ConsoleApi {
  private readonly fetchFn: FetchLike;

  constructor(
    private readonly baseUrl: string = "",
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async getJson(path: string): Promise<unknown> {
    const resp = await this.fetchFn(this.baseUrl + path);
    if (!resp.ok) {
      throw new ApiError(`GET ${path} failed with ${resp.status}`, resp.status);
    }
    return resp.json();
  }

  async pending(): Promise<Ticket[]> {
    const doc = await this.getJson("/api/pending");
    const raw = (doc as { tickets?: unknown[] }).tickets;
    if (!Array.isArray(raw)) {
      throw new ApiError("pending response carries no ticket list", 200);
    }
    const tickets: Ticket[] = [];
    for (const entry of raw) {
      const ticket = parseTicket(entry);
      if (ticket !== null) tickets.push(ticket);
    }
    return tickets;
  }

  async evidence(after: number = 0): Promise<EvidencePage> {
    const doc = await this.getJson(`/api/evidence?after=${after}`);
    const body = doc as { records?: unknown[]; next?: unknown };
    if (!Array.isArray(body.records) || typeof body.next !== "number") {
      throw new ApiError("evidence response is malformed", 200);
    }
    const records: EvidenceRecord[] = [];
    for (const entry of body.records) {
      const record = parseEvidenceRecord(entry);
      if (record !== null) records.push(record);
    }
    return { records, next: body.next };
  }

  async verify(): Promise<ChainDoc> {
    const doc = await this.getJson("/api/evidence/verify");
    const chain = parseChainDoc(doc);
    if (chain === null) {
      throw new ApiError("verify response is malformed", 200);
    }
    return chain;
  }

  async confirm(ticketId: string, decision: ConfirmDecision): Promise<ConfirmResult> {
    // The entire outbound payload: a ticket id and a yes/no.
    const body = JSON.stringify({ ticket_id: ticketId, decision });
    let resp: Response;
    try {
      resp = await this.fetchFn(this.baseUrl + "/api/confirm", {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body,
      });
    } catch (exc) {
      return { kind: "error", detail: `plane unreachable: ${String(exc)}` };
    }
    const payload = (await resp.json().catch(() => ({}))) as Record<string, unknown>;
    const detail = typeof payload["detail"] === "string" ? payload["detail"] : "";
    if (resp.status === 200) {
      return {
        kind: "resolved",
        state: typeof payload["state"] === "string" ? payload["state"] : "resolved",
        ticketId,
      };
    }
    if (resp.status === 409) return { kind: "conflict", detail };
    if (resp.status === 410) return { kind: "expired", detail };
    if (resp.status === 404) return { kind: "unknown", detail };
    return { kind: "error", detail: detail || `confirm failed with ${resp.status}` };
  }
}
