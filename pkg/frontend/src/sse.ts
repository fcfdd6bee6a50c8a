/** Event-stream subscription with resumable cursor.
 *
 * The plane replays history from the id in the Last-Event-ID header, so a
 * dropped connection loses nothing: the stream reconnects with the highest
 * id it has seen and the page is marked stale only while disconnected.
 */

import { PlaneEvent, parsePlaneEvent } from "./types.js";

export type SseFrame = { id: number | null; event: string | null; data: string };

/** Incremental text/event-stream parser; tolerant of chunk boundaries. */
export class SseParser {
  private buffer = "";
  private id: number | null = null;
  private event: string | null = null;
  private data: string[] = [];

  feed(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    let newline;
    while ((newline = this.buffer.indexOf("\n")) >= 0) {
      let line = this.buffer.slice(0, newline);
      this.buffer = this.buffer.slice(newline + 1);
      if (line.endsWith("\r")) line = line.slice(0, -1);
      if (line === "") {
        if (this.data.length > 0 || this.id !== null || this.event !== null) {
          frames.push({ id: this.id, event: this.event, data: this.data.join("\n") });
        }
        this.id = null;
        this.event = null;
        this.data = [];
        continue;
      }
      if (line.startsWith(":")) continue;
      const colon = line.indexOf(":");
      const field = colon < 0 ? line : line.slice(0, colon);
      let value = colon < 0 ? "" : line.slice(colon + 1);
      if (value.startsWith(" ")) value = value.slice(1);
      if (field === "id") {
        const parsed = Number(value);
        if (Number.isInteger(parsed)) this.id = parsed;
      } else if (field === "event") {
        this.event = value;
      } else if (field === "data") {
        this.data.push(value);
      }
    }
    return frames;
  }
}

export type StreamStatus = "connecting" | "live" | "stale" | "stopped";

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export type StreamOptions = {
  retryMs?: number;
  fetchFn?: FetchLike;
  sleep?: (ms: number) => Promise<void>;
};

export class EventStream {
  lastEventId = 0;
  private stopped = false;
  private controller: AbortController | null = null;
  private readonly retryMs: number;
  private readonly fetchFn: FetchLike;
  private readonly sleep: (ms: number) => Promise<void>;

  constructor(
    private readonly baseUrl: string,
    private readonly onEvent: (ev: PlaneEvent) => void,
    private readonly onStatus: (status: StreamStatus) => void,
    options: StreamOptions = {},
  ) {
    this.retryMs = options.retryMs ?? 2000;
    this.fetchFn = options.fetchFn ?? ((input, init) => fetch(input, init));
    this.sleep =
      options.sleep ?? ((ms) => new Promise<void>((resolve) => setTimeout(resolve, ms)));
  }

  /** Consume the stream until stop(); reconnects with the resume cursor. */
  async run(afterId: number = 0): Promise<void> {
    this.lastEventId = afterId;
    while (!this.stopped) {
      this.onStatus("connecting");
      try {
        this.controller = new AbortController();
        const resp = await this.fetchFn(`${this.baseUrl}/api/events`, {
          headers: {
            Accept: "text/event-stream",
            "Last-Event-ID": String(this.lastEventId),
          },
          signal: this.controller.signal,
        });
        if (!resp.ok || resp.body === null) {
          throw new Error(`events endpoint returned ${resp.status}`);
        }
        this.onStatus("live");
        await this.consume(resp.body);
      } catch {
        // connection errors and aborts both land here; the loop decides
      }
      if (this.stopped) break;
      this.onStatus("stale");
      await this.sleep(this.retryMs);
    }
    this.onStatus("stopped");
  }

  private async consume(body: ReadableStream<Uint8Array>): Promise<void> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    while (true) {
      const { done, value } = await reader.read();
      if (done) return;
      for (const frame of parser.feed(decoder.decode(value, { stream: true }))) {
        if (frame.id !== null && frame.id > this.lastEventId) {
          this.lastEventId = frame.id;
        }
        if (frame.data === "") continue;
        let parsed: unknown;
        try {
          parsed = JSON.parse(frame.data);
        } catch {
          continue;
        }
        const event = parsePlaneEvent(parsed);
        if (event !== null) this.onEvent(event);
      }
    }
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }
}
