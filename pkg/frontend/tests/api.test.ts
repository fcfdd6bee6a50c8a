import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { createServer, type IncomingMessage, type Server, type ServerResponse } from "node:http";
import type { AddressInfo } from "node:net";

import { ConsoleApi } from "../src/api.js";
import { makeChain, makeRecord, makeTicket } from "./fixtures.js";

let server: Server;
let api: ConsoleApi;
const confirmBodies: Array<Record<string, unknown>> = [];

const RECORDS = [makeRecord({ seq: 1 }), makeRecord({ seq: 2, record_hash: "cd".repeat(32) })];

function readBody(req: IncomingMessage): Promise<string> {
  return new Promise((resolve) => {
    let body = "";
    req.on("data", (chunk) => (body += chunk));
    req.on("end", () => resolve(body));
  });
}

function reply(res: ServerResponse, status: number, doc: unknown): void {
  res.writeHead(status, { "Content-Type": "application/json" });
  res.end(JSON.stringify(doc));
}

async function route(req: IncomingMessage, res: ServerResponse): Promise<void> {
  const url = new URL(req.url ?? "/", "http://localhost");
  if (req.method === "GET" && url.pathname === "/api/pending") {
    return reply(res, 200, { tickets: [makeTicket(), { not: "a ticket" }] });
  }
  if (req.method === "GET" && url.pathname === "/api/evidence") {
    const after = Number(url.searchParams.get("after") ?? "0");
    return reply(res, 200, { records: RECORDS.slice(after), next: RECORDS.length });
  }
  if (req.method === "GET" && url.pathname === "/api/evidence/verify") {
    return reply(res, 200, makeChain());
  }
  if (req.method === "POST" && url.pathname === "/api/confirm") {
    const body = JSON.parse(await readBody(req)) as Record<string, unknown>;
    confirmBodies.push(body);
    const ticket = body["ticket_id"];
    if (ticket === "t-ok") return reply(res, 200, { state: "approved", ticket_id: ticket });
    if (ticket === "t-dup") {
      return reply(res, 409, { error: "AlreadyResolved", detail: "ticket already approved" });
    }
    if (ticket === "t-old") {
      return reply(res, 410, { error: "TicketExpired", detail: "ticket expired" });
    }
    if (ticket === "t-missing") {
      return reply(res, 404, { error: "UnknownTicket", detail: "no such ticket" });
    }
    return reply(res, 500, { error: "boom", detail: "synthetic failure" });
  }
  reply(res, 404, { error: "not found" });
}

beforeAll(async () => {
  server = createServer((req, res) => void route(req, res));
  await new Promise<void>((resolve) => server.listen(0, "127.0.0.1", resolve));
  const { port } = server.address() as AddressInfo;
  api = new ConsoleApi(`http://127.0.0.1:${port}`);
});

afterAll(async () => {
  await new Promise<void>((resolve) => server.close(() => resolve()));
});

describe("ConsoleApi reads", () => {
  it("returns parsed pending tickets and drops malformed entries", async () => {
    const tickets = await api.pending();
    expect(tickets.length).toBe(1);
    expect(tickets[0]!.ticket_id).toBe("t-0011aabb");
  });

  it("pages evidence with the after cursor", async () => {
    const all = await api.evidence(0);
    expect(all.records.map((r) => r.seq)).toEqual([1, 2]);
    expect(all.next).toBe(2);

    const tail = await api.evidence(1);
    expect(tail.records.map((r) => r.seq)).toEqual([2]);
  });

  it("returns the chain verification document", async () => {
    const chain = await api.verify();
    expect(chain.valid).toBe(true);
    expect(chain.records_checked).toBe(12);
  });
});

describe("ConsoleApi confirm", () => {
  it("sends exactly ticket_id and decision, nothing else", async () => {
    confirmBodies.length = 0;
    await api.confirm("t-ok", "approve");
    expect(confirmBodies.length).toBe(1);
    expect(Object.keys(confirmBodies[0]!).sort()).toEqual(["decision", "ticket_id"]);
    expect(confirmBodies[0]).toEqual({ ticket_id: "t-ok", decision: "approve" });
  });

  it("maps a 200 to resolved with the plane's state", async () => {
    const result = await api.confirm("t-ok", "approve");
    expect(result).toEqual({ kind: "resolved", state: "approved", ticketId: "t-ok" });
  });

  it("maps 409 to a distinct already-resolved outcome", async () => {
    const result = await api.confirm("t-dup", "deny");
    expect(result).toEqual({ kind: "conflict", detail: "ticket already approved" });
  });

  it("maps 410 to a distinct expired outcome", async () => {
    const result = await api.confirm("t-old", "approve");
    expect(result).toEqual({ kind: "expired", detail: "ticket expired" });
  });

  it("maps 404 to unknown", async () => {
    const result = await api.confirm("t-missing", "approve");
    expect(result).toEqual({ kind: "unknown", detail: "no such ticket" });
  });

  it("maps other statuses and transport failures to error", async () => {
    const result = await api.confirm("t-broken", "approve");
    expect(result.kind).toBe("error");

    const dead = new ConsoleApi("http://127.0.0.1:1");
    const unreachable = await dead.confirm("t-ok", "approve");
    expect(unreachable.kind).toBe("error");
    if (unreachable.kind === "error") {
      expect(unreachable.detail).toContain("unreachable");
    }
  });
});
