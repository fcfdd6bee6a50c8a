/** Browser bootstrap: wires the API client, the event stream, and the DOM. */

import { ConsoleApi, ConfirmResult } from "./api.js";
import { EventStream } from "./sse.js";
import { ConsoleStore } from "./store.js";
import { renderApp } from "./render.js";
import { ChainDoc } from "./types.js";

const EVIDENCE_VIEW_LIMIT = 50;

function describeConfirm(result: ConfirmResult, ticketId: string): [string, string] {
  switch (result.kind) {
    case "resolved":
      return ["resolved", `ticket ${ticketId} ${result.state}`];
    case "conflict":
      return ["conflict", `ticket ${ticketId} was already resolved elsewhere: ${result.detail}`];
    case "expired":
      return ["expired", `ticket ${ticketId} expired before it was resolved: ${result.detail}`];
    case "unknown":
      return ["error", `ticket ${ticketId} is unknown to the plane: ${result.detail}`];
    case "error":
      return ["error", `confirmation failed: ${result.detail}`];
  }
}

export function boot(root: HTMLElement, api: ConsoleApi): () => void {
  const store = new ConsoleStore();
  let chain: ChainDoc | null = null;
  let chainTimer: ReturnType<typeof setTimeout> | null = null;
  let renderedVersion = -1;

  function render(force = false): void {
    if (!force && store.version === renderedVersion) return;
    renderedVersion = store.version;
    root.innerHTML = renderApp({
      connection: store.connection,
      tickets: store.pendingTickets(),
      notices: store.notices,
      records: store.latestRecords(EVIDENCE_VIEW_LIMIT),
      chain,
      nowMs: Date.now(),
    });
  }

  function scheduleChainRefresh(): void {
    if (chainTimer !== null) return;
    chainTimer = setTimeout(() => {
      chainTimer = null;
      void api
        .verify()
        .then((doc) => {
          chain = doc;
          render(true);
        })
        .catch(() => undefined);
    }, 300);
  }

  async function seed(): Promise<void> {
    try {
      store.seedPending(await api.pending());
      let page = await api.evidence(store.evidenceCursor);
      store.seedEvidence(page.records, page.next);
      while (page.records.length > 0 && page.next > store.records.length) {
        page = await api.evidence(page.next);
        store.seedEvidence(page.records, page.next);
      }
    } catch (exc) {
      store.pushNotice("error", `could not load plane state: ${String(exc)}`);
    }
    scheduleChainRefresh();
    render();
  }

  const stream = new EventStream(
    "",
    (event) => {
      store.applyEvent(event);
      if (event.kind === "evidence") scheduleChainRefresh();
      render();
    },
    (status) => {
      store.setConnection(status);
      if (status === "live") void seed();
      render();
    },
  );

  async function onClick(raw: Event): Promise<void> {
    const target = raw.target as HTMLElement | null;
    const button = target?.closest<HTMLElement>("[data-confirm]");
    if (!button) return;
    const ticketId = button.dataset["ticketId"];
    const decision = button.dataset["decision"];
    if (!ticketId || (decision !== "approve" && decision !== "deny")) return;
    const result = await api.confirm(ticketId, decision);
    const [kind, text] = describeConfirm(result, ticketId);
    store.pushNotice(kind as Parameters<typeof store.pushNotice>[0], text);
    if (result.kind === "resolved" || result.kind === "expired") {
      store.removePending(ticketId);
    }
    render();
  }

  root.addEventListener("click", (ev) => void onClick(ev));
  const ticker = setInterval(() => {
    if (store.pending.size > 0) render(true);
  }, 1000);
  void stream.run(0);
  render(true);

  return () => {
    clearInterval(ticker);
    stream.stop();
  };
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root !== null) boot(root, new ConsoleApi(""));
}
