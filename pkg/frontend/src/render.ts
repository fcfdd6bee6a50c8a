/** Pure HTML renderers. Every dynamic value passes through escapeHtml. */

import { ChainDoc, EvidenceRecord, Ticket } from "./types.js";
import { Notice } from "./store.js";
import { StreamStatus } from "./sse.js";

export function escapeHtml(value: string): string {
  return value
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

function scopeSummary(ticket: Ticket): string {
  const parts: string[] = [];
  for (const prefix of ticket.approved_scope.path_prefixes) parts.push(prefix);
  for (const pattern of ticket.approved_scope.command_patterns) parts.push(`$ ${pattern}`);
  if (ticket.approved_scope.endpoint) parts.push(`@${ticket.approved_scope.endpoint}`);
  return parts.join(" , ");
}

export function renderStaleBanner(status: StreamStatus): string {
  if (status === "live") return "";
  const text =
    status === "connecting"
      ? "connecting to the plane..."
      : status === "stale"
        ? "connection lost: this view may be stale, reconnecting"
        : "stream stopped";
  return `<div class="banner banner-${escapeHtml(status)}" role="status">${escapeHtml(text)}</div>`;
}

export function renderTicketCard(ticket: Ticket, nowMs: number): string {
  const remainingMs = ticket.expires_at - nowMs;
  const remaining =
    remainingMs > 0 ? `expires in ${Math.ceil(remainingMs / 1000)}s` : "expiring now";
  return `
<article class="ticket" data-ticket="${escapeHtml(ticket.ticket_id)}">
  <header>
    <span class="ticket-level">${escapeHtml(ticket.level)}</span>
    <span class="ticket-act">${escapeHtml(ticket.act)}</span>
    <code class="ticket-obj">${escapeHtml(ticket.obj)}</code>
  </header>
  <p class="ticket-scope">scope: <code>${escapeHtml(scopeSummary(ticket))}</code></p>
  <p class="ticket-meta">${escapeHtml(ticket.ticket_id)} &middot; session ${escapeHtml(
    ticket.sid,
  )} seq ${ticket.seq} &middot; ${escapeHtml(remaining)}</p>
  <div class="ticket-actions">
    <button data-confirm data-ticket-id="${escapeHtml(ticket.ticket_id)}" data-decision="approve">
      Approve
    </button>
    <button data-confirm data-ticket-id="${escapeHtml(ticket.ticket_id)}" data-decision="deny" class="deny">
      Deny
    </button>
  </div>
</article>`;
}

export function renderPending(tickets: Ticket[], nowMs: number): string {
  if (tickets.length === 0) {
    return `<p class="empty">No operations are waiting for confirmation.</p>`;
  }
  return tickets.map((t) => renderTicketCard(t, nowMs)).join("\n");
}

export function renderNotice(notice: Notice): string {
  return `<li class="notice notice-${escapeHtml(notice.kind)}">${escapeHtml(notice.text)}</li>`;
}

export function renderNotices(notices: Notice[]): string {
  if (notices.length === 0) return "";
  return `<ul class="notices">${notices.map(renderNotice).join("")}</ul>`;
}

export function renderChainBadge(chain: ChainDoc | null): string {
  if (chain === null) {
    return `<span class="badge badge-unknown">chain not checked yet</span>`;
  }
  if (chain.valid) {
    return `<span class="badge badge-valid">chain verified &#10003; ${chain.records_checked} records</span>`;
  }
  const where =
    chain.first_break !== null
      ? ` at index ${chain.first_break}`
      : chain.lifecycle_errors.length > 0
        ? ` (${chain.lifecycle_errors.length} lifecycle errors)`
        : "";
  const reason = chain.break_reason !== null ? `: ${chain.break_reason}` : "";
  return `<span class="badge badge-broken">chain BROKEN${escapeHtml(where + reason)}</span>`;
}

export function renderEvidenceRows(records: EvidenceRecord[]): string {
  return records
    .map(
      (r) => `
<tr class="res-${escapeHtml(r.res)}">
  <td>${escapeHtml(r.sid)}/${r.seq}</td>
  <td>${escapeHtml(r.act)}</td>
  <td><code>${escapeHtml(r.obj)}</code></td>
  <td>${escapeHtml(r.level)}</td>
  <td>${escapeHtml(r.dec)}</td>
  <td>${escapeHtml(r.res)}</td>
  <td><code class="hash">${escapeHtml(r.record_hash.slice(0, 12))}</code></td>
</tr>`,
    )
    .join("");
}

export type ViewModel = {
  connection: StreamStatus;
  tickets: Ticket[];
  notices: Notice[];
  records: EvidenceRecord[];
  chain: ChainDoc | null;
  nowMs: number;
};

export function renderApp(view: ViewModel): string {
  return `
${renderStaleBanner(view.connection)}
<header class="top">
  <h1>Operation Plane Console</h1>
  ${renderChainBadge(view.chain)}
</header>
${renderNotices(view.notices)}
<section class="pending">
  <h2>Waiting for confirmation (${view.tickets.length})</h2>
  ${renderPending(view.tickets, view.nowMs)}
</section>
<section class="evidence">
  <h2>Evidence</h2>
  <table>
    <thead>
      <tr><th>lifecycle</th><th>act</th><th>object</th><th>level</th><th>decision</th><th>result</th><th>hash</th></tr>
    </thead>
    <tbody>${renderEvidenceRows(view.records)}</tbody>
  </table>
</section>`;
}
