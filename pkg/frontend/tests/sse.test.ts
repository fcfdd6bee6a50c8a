import { describe, expect, it } from "vitest";

import { EventStream, SseParser, StreamStatus } from "../src/sse.js";
import { PlaneEvent } from "../src/types.js";

const encoder = new TextEncoder();

function frame(id: number, kind: string, data: unknown): string {
  return `id: ${id}\nevent: ${kind}\ndata: ${JSON.stringify({
    event_id: id,
    kind,
    data,
  })}\n\n`;
}

describe("SseParser", () => {
  it("parses a single complete frame", () => {
    const parser = new SseParser();
    const frames = parser.feed('id: 7\nevent: grant\ndata: {"x":1}\n\n');
    expect(frames).toEqual([{ id: 7, event: "grant", data: '{"x":1}' }]);
  });

  it("reassembles frames split across arbitrary chunk boundaries", () => {
    const parser = new SseParser();
    const wire = 'id: 3\nevent: evidence\ndata: {"res":"pending"}\n\n';
    const frames = [];
    for (const ch of wire) frames.push(...parser.feed(ch));
    expect(frames).toEqual([{ id: 3, event: "evidence", data: '{"res":"pending"}' }]);
  });

  it("ignores keepalive comments between frames", () => {
    const parser = new SseParser();
    const frames = parser.feed(": keepalive\n\nid: 1\ndata: {}\n\n: keepalive\n\n");
    expect(frames).toEqual([{ id: 1, event: null, data: "{}" }]);
  });

  it("returns several frames from one chunk, in order", () => {
    const parser = new SseParser();
    const frames = parser.feed("id: 1\ndata: a\n\nid: 2\ndata: b\n\n");
    expect(frames.map((f) => f.id)).toEqual([1, 2]);
    expect(frames.map((f) => f.data)).toEqual(["a", "b"]);
  });

  it("joins multi-line data with newlines", () => {
    const parser = new SseParser();
    const frames = parser.feed("data: first\ndata: second\n\n");
    expect(frames).toEqual([{ id: null, event: null, data: "first\nsecond" }]);
  });

  it("tolerates CRLF line endings", () => {
    const parser = new SseParser();
    const frames = parser.feed("id: 4\r\ndata: x\r\n\r\n");
    expect(frames).toEqual([{ id: 4, event: null, data: "x" }]);
  });

  it("keeps a non-numeric id out of the frame", () => {
    const parser = new SseParser();
    const frames = parser.feed("id: abc\ndata: x\n\n");
    expect(frames).toEqual([{ id: null, event: null, data: "x" }]);
  });
});

type Feed = {
  response: Response;
  push: (text: string) => void;
  close: () => void;
  bindSignal: (signal: AbortSignal | null | undefined) => void;
};

function openFeed(initial = ""): Feed {
  let controller!: ReadableStreamDefaultController<Uint8Array>;
  const stream = new ReadableStream<Uint8Array>({
    start(c) {
      controller = c;
      if (initial !== "") c.enqueue(encoder.encode(initial));
    },
  });
  const fail = () => {
    try {
      controller.error(new Error("aborted"));
    } catch {
      // already closed; nothing left to interrupt
    }
  };
  return {
    response: new Response(stream, {
      status: 200,
      headers: { "Content-Type": "text/event-stream" },
    }),
    push: (text) => controller.enqueue(encoder.encode(text)),
    close: () => controller.close(),
    // real fetch rejects pending reads on abort; the stub must as well
    bindSignal: (signal) => signal?.addEventListener("abort", fail),
  };
}

function waitFor(check: () => boolean, timeoutMs = 2000): Promise<void> {
  return new Promise((resolve, reject) => {
    const started = Date.now();
    const poll = () => {
      if (check()) return resolve();
      if (Date.now() - started > timeoutMs) return reject(new Error("waitFor timed out"));
      setTimeout(poll, 5);
    };
    poll();
  });
}

describe("EventStream", () => {
  it("delivers events, reconnects with the resume cursor, and flags staleness", async () => {
    const resumeHeaders: string[] = [];
    const feeds: Feed[] = [];
    const fetchFn = async (_input: string, init?: RequestInit) => {
      const headers = new Headers(init?.headers);
      resumeHeaders.push(headers.get("Last-Event-ID") ?? "");
      const feed = openFeed();
      feed.bindSignal(init?.signal);
      feeds.push(feed);
      return feed.response;
    };

    const events: PlaneEvent[] = [];
    const statuses: StreamStatus[] = [];
    const stream = new EventStream(
      "",
      (ev) => events.push(ev),
      (status) => statuses.push(status),
      { retryMs: 1, fetchFn, sleep: () => Promise.resolve() },
    );

    const done = stream.run(5);
    await waitFor(() => feeds.length === 1);
    feeds[0]!.push(frame(6, "grant", { grant_id: "g-1" }));
    feeds[0]!.push(frame(7, "evidence", { res: "pending" }));
    await waitFor(() => events.length === 2);
    feeds[0]!.close();

    // the drop must surface as staleness, then a resumed connection
    await waitFor(() => feeds.length === 2);
    feeds[1]!.push(frame(8, "ticket", { state: "pending" }));
    await waitFor(() => events.length === 3);

    stream.stop();
    await done;

    expect(resumeHeaders).toEqual(["5", "7"]);
    expect(events.map((e) => e.event_id)).toEqual([6, 7, 8]);
    expect(stream.lastEventId).toBe(8);
    expect(statuses[0]).toBe("connecting");
    expect(statuses).toContain("live");
    expect(statuses).toContain("stale");
    expect(statuses[statuses.length - 1]).toBe("stopped");
  });

  it("skips frames that do not decode to plane events", async () => {
    const feed = openFeed();
    const fetchFn = async (_input: string, init?: RequestInit) => {
      feed.bindSignal(init?.signal);
      return feed.response;
    };
    const events: PlaneEvent[] = [];
    const stream = new EventStream("", (ev) => events.push(ev), () => undefined, {
      retryMs: 1,
      fetchFn,
      sleep: () => Promise.resolve(),
    });
    const done = stream.run(0);
    feed.push("id: 1\ndata: not json\n\n");
    feed.push('id: 2\ndata: {"event_id":2,"kind":"mystery","data":{}}\n\n');
    feed.push(frame(3, "grant", {}));
    await waitFor(() => events.length === 1);
    stream.stop();
    await done;
    expect(events[0]!.event_id).toBe(3);
    expect(stream.lastEventId).toBe(3);
  });

  it("treats a non-200 response as a stale connection and retries", async () => {
    let calls = 0;
    const feed = openFeed(frame(1, "grant", {}));
    const fetchFn = async (_input: string, init?: RequestInit) => {
      calls += 1;
      if (calls === 1) return new Response("busy", { status: 503 });
      feed.bindSignal(init?.signal);
      return feed.response;
    };
    const events: PlaneEvent[] = [];
    const statuses: StreamStatus[] = [];
    const stream = new EventStream(
      "",
      (ev) => events.push(ev),
      (status) => statuses.push(status),
      { retryMs: 1, fetchFn, sleep: () => Promise.resolve() },
    );
    const done = stream.run(0);
    await waitFor(() => events.length === 1);
    stream.stop();
    await done;
    expect(calls).toBe(2);
    expect(statuses.filter((s) => s === "stale").length).toBeGreaterThanOrEqual(1);
  });
});
