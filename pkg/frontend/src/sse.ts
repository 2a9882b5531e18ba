/**
 * Server-sent-events client built on streaming fetch. The native EventSource
 * API cannot attach an Authorization header, so the console reads the byte
 * stream itself and parses frames incrementally.
 */

export interface SseFrame {
  event: string;
  data: string;
}

/** Incremental SSE frame parser; safe across arbitrary chunk boundaries. */
export class SseParser {
  private buffer = "";

  feed(chunk: string): SseFrame[] {
    this.buffer += chunk;
    // Hold back a trailing CR: it may be the first half of a CRLF split
    // across chunks. Normalize the rest to LF once, up front.
    let pending = "";
    if (this.buffer.endsWith("\r")) {
      pending = "\r";
      this.buffer = this.buffer.slice(0, -1);
    }
    this.buffer = this.buffer.replace(/\r\n/g, "\n").replace(/\r/g, "\n");
    const frames: SseFrame[] = [];
    let split: number;
    while ((split = this.buffer.indexOf("\n\n")) !== -1) {
      const raw = this.buffer.slice(0, split);
      this.buffer = this.buffer.slice(split + 2);
      const frame = parseFrame(raw);
      if (frame) frames.push(frame);
    }
    this.buffer += pending;
    return frames;
  }
}

function parseFrame(raw: string): SseFrame | null {
  let event = "message";
  const data: string[] = [];
  for (const line of raw.split("\n")) {
    if (line.startsWith(":")) continue; // comment / keep-alive
    if (line.startsWith("event:")) event = line.slice("event:".length).trim();
    else if (line.startsWith("data:")) {
      let value = line.slice("data:".length);
      if (value.startsWith(" ")) value = value.slice(1);
      data.push(value);
    }
  }
  if (data.length === 0) return null;
  return { event, data: data.join("\n") };
}

export interface StreamOptions {
  fetchImpl?: typeof fetch;
  /** Delay before reconnecting after a drop, in milliseconds. */
  retryDelayMs?: number;
  onFrame: (frame: SseFrame) => void;
  onConnect?: () => void;
  onDisconnect?: () => void;
}

export interface StreamHandle {
  stop: () => void;
  /** Resolves when the stream loop exits (after stop()). */
  done: Promise<void>;
}

const DEFAULT_RETRY_DELAY_MS = 2000;

/**
 * Subscribe to an SSE endpoint. Reconnects with a fixed delay until stopped;
 * every decoded frame is handed to onFrame in arrival order.
 */
export function openStream(
  url: string,
  headers: Record<string, string>,
  options: StreamOptions,
): StreamHandle {
  const fetchImpl: typeof fetch =
    options.fetchImpl ?? ((input, init) => globalThis.fetch(input, init));
  const retryDelay = options.retryDelayMs ?? DEFAULT_RETRY_DELAY_MS;
  const controller = new AbortController();
  let stopped = false;

  const done = (async () => {
    while (!stopped) {
      try {
        const response = await fetchImpl(url, {
          headers: { ...headers, accept: "text/event-stream" },
          signal: controller.signal,
        });
        if (!response.ok || !response.body) {
          throw new Error(`stream request failed: ${response.status}`);
        }
        options.onConnect?.();
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        const parser = new SseParser();
        for (;;) {
          const { done: eof, value } = await reader.read();
          if (eof) break;
          for (const frame of parser.feed(decoder.decode(value, { stream: true }))) {
            options.onFrame(frame);
          }
        }
      } catch {
        // fall through to the retry path below
      }
      if (stopped) break;
      options.onDisconnect?.();
      await new Promise((resolve) => setTimeout(resolve, retryDelay));
    }
  })();

  return {
    stop: () => {
      stopped = true;
      controller.abort();
    },
    done,
  };
}
