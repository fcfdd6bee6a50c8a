/** Console state: pending tickets, an evidence feed, and connection health.
 *
 * Everything flows in from the plane; the store only organizes it. Records
 * are deduplicated by record hash so seeding a page and replaying the event
 * stream over the same range cannot double-count.
 */

import { EvidenceRecord, PlaneEvent, Ticket, parseEvidenceRecord, parseTicket } from "./types.js";
import { StreamStatus } from "./sse.js";

export type NoticeKind = "resolved" | "conflict" | "expired" | "error" | "info";

export type Notice = { kind: NoticeKind; text: string };

const MAX_NOTICES = 6;
const MAX_RESOLVED = 20;

export class ConsoleStore {
  readonly pending = new Map<string, Ticket>();
  readonly resolved: Ticket[] = [];
  readonly records: EvidenceRecord[] = [];
  readonly notices: Notice[] = [];
  connection: StreamStatus = "connecting";
  lastEventId = 0;
  evidenceCursor = 0;
  version = 0;
  private readonly seenRecords = new Set<string>();

  private bump(): void {
    this.version += 1;
  }

  seedPending(tickets: Ticket[]): void {
    this.pending.clear();
    for (const ticket of tickets) {
      if (ticket.state === "pending") this.pending.set(ticket.ticket_id, ticket);
    }
    this.bump();
  }

  seedEvidence(records: EvidenceRecord[], next: number): void {
    for (const record of records) this.addRecord(record);
    this.evidenceCursor = Math.max(this.evidenceCursor, next);
    this.bump();
  }

  private addRecord(record: EvidenceRecord): boolean {
    if (this.seenRecords.has(record.record_hash)) return false;
    this.seenRecords.add(record.record_hash);
    this.records.push(record);
    return true;
  }

  private applyTicket(ticket: Ticket): void {
    if (ticket.state === "pending") {
      this.pending.set(ticket.ticket_id, ticket);
      return;
    }
    this.pending.delete(ticket.ticket_id);
    this.resolved.unshift(ticket);
    if (this.resolved.length > MAX_RESOLVED) this.resolved.pop();
  }

  applyEvent(event: PlaneEvent): void {
    if (event.event_id > this.lastEventId) this.lastEventId = event.event_id;
    if (event.kind === "ticket") {
      const ticket = parseTicket(event.data);
      if (ticket !== null) this.applyTicket(ticket);
    } else if (event.kind === "evidence") {
      const record = parseEvidenceRecord(event.data);
      if (record !== null) this.addRecord(record);
    }
    // grant events carry no console-visible state beyond the evidence feed
    this.bump();
  }

  setConnection(status: StreamStatus): void {
    if (this.connection === status) return;
    this.connection = status;
    this.bump();
  }

  pushNotice(kind: NoticeKind, text: string): void {
    this.notices.unshift({ kind, text });
    if (this.notices.length > MAX_NOTICES) this.notices.pop();
    this.bump();
  }

  removePending(ticketId: string): void {
    if (this.pending.delete(ticketId)) this.bump();
  }

  pendingTickets(): Ticket[] {
    return [...this.pending.values()].sort((a, b) => a.created_at - b.created_at);
  }

  latestRecords(limit: number): EvidenceRecord[] {
    return this.records.slice(-limit).reverse();
  }
}
