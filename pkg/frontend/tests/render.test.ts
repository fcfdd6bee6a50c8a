import { describe, expect, it } from "vitest";

import {
  escapeHtml,
  renderApp,
  renderChainBadge,
  renderNotices,
  renderStaleBanner,
  renderTicketCard,
} from "../src/render.js";
import { makeChain, makeRecord, makeTicket } from "./fixtures.js";

describe("escapeHtml", () => {
  it("escapes markup-significant characters", () => {
    expect(escapeHtml(`<img src="x" onerror='y'> & co`)).toBe(
      "&lt;img src=&quot;x&quot; onerror=&#39;y&#39;&gt; &amp; co",
    );
  });
});

describe("ticket cards", () => {
  it("shows the operation, level, scope, and both decision buttons", () => {
    const html = renderTicketCard(makeTicket(), 1_000_000);
    expect(html).toContain("send");
    expect(html).toContain("~/.bashrc");
    expect(html).toContain("L3");
    expect(html).toContain('data-ticket-id="t-0011aabb"');
    expect(html).toContain('data-decision="approve"');
    expect(html).toContain('data-decision="deny"');
    expect(html).toContain("expires in 60s");
  });

  it("escapes hostile object names instead of rendering them", () => {
    const html = renderTicketCard(
      makeTicket({ obj: '<script>alert("x")</script>' }),
      1_000_000,
    );
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });
});

describe("stale banner", () => {
  it("is absent while the stream is live", () => {
    expect(renderStaleBanner("live")).toBe("");
  });

  it("warns that the view may be stale after a drop", () => {
    const html = renderStaleBanner("stale");
    expect(html).toContain("may be stale");
    expect(html).toContain("banner-stale");
  });
});

describe("chain badge", () => {
  it("shows a verified badge for a valid chain", () => {
    const html = renderChainBadge(makeChain());
    expect(html).toContain("badge-valid");
    expect(html).toContain("12 records");
  });

  it("names the break index for a broken chain", () => {
    const html = renderChainBadge(
      makeChain({
        chain_valid: false,
        valid: false,
        first_break: 4,
        break_reason: "record hash mismatch",
      }),
    );
    expect(html).toContain("badge-broken");
    expect(html).toContain("index 4");
    expect(html).toContain("record hash mismatch");
  });

  it("reports an unchecked chain distinctly", () => {
    expect(renderChainBadge(null)).toContain("badge-unknown");
  });
});

describe("notices", () => {
  it("renders conflict and expired outcomes with distinct classes", () => {
    const html = renderNotices([
      { kind: "conflict", text: "ticket t-1 was already resolved elsewhere" },
      { kind: "expired", text: "ticket t-2 expired before it was resolved" },
    ]);
    expect(html).toContain("notice-conflict");
    expect(html).toContain("notice-expired");
    expect(html.indexOf("notice-conflict")).toBeLessThan(html.indexOf("notice-expired"));
  });
});

describe("full app shell", () => {
  it("assembles banner, pending cards, and the evidence table", () => {
    const html = renderApp({
      connection: "stale",
      tickets: [makeTicket()],
      notices: [{ kind: "resolved", text: "ticket t-9 approved" }],
      records: [makeRecord({ res: "completed" })],
      chain: makeChain(),
      nowMs: 1_000_000,
    });
    expect(html).toContain("may be stale");
    expect(html).toContain("Waiting for confirmation (1)");
    expect(html).toContain("res-completed");
    expect(html).toContain("badge-valid");
    expect(html).toContain("ticket t-9 approved");
  });

  it("shows an empty state instead of an empty card list", () => {
    const html = renderApp({
      connection: "live",
      tickets: [],
      notices: [],
      records: [],
      chain: null,
      nowMs: 0,
    });
    expect(html).toContain("No operations are waiting");
  });
});
