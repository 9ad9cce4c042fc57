/**
 * Newline-delimited JSON stream client over fetch, with auto-reconnect.
 *
 * The fetch function and the delay hook are injectable so tests can run
 * the whole reconnect/backoff path without a network or real timers.
 */

export interface StreamCallbacks {
  onMessage: (msg: unknown) => void;
  onStatus: (status: "connecting" | "connected" | "disconnected") => void;
}

export interface StreamOptions {
  fetchFn?: typeof fetch;
  /** resolve after ms; injectable for tests */
  delay?: (ms: number) => Promise<void>;
  baseBackoffMs?: number;
  maxBackoffMs?: number;
}

const realDelay = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/** Split a byte stream into complete lines, carrying partials forward. */
export class LineSplitter {
  private buffer = "";

  push(chunk: string): string[] {
    this.buffer += chunk;
    const lines = this.buffer.split("\n");
    this.buffer = lines.pop() ?? "";
    return lines.filter((l) => l.trim().length > 0);
  }
}

/** Parse one NDJSON line; returns null (never throws) on bad frames. */
export function parseLine(line: string): unknown | null {
  try {
    const value = JSON.parse(line);
    return typeof value === "object" && value !== null ? value : null;
  } catch {
    return null;
  }
}

export function backoffMs(attempt: number, base = 500, max = 15_000): number {
  return Math.min(max, base * 2 ** Math.min(attempt, 10));
}

export class StreamClient {
  private stopped = false;
  private attempt = 0;
  private readonly fetchFn: typeof fetch;
  private readonly delay: (ms: number) => Promise<void>;
  private readonly base: number;
  private readonly max: number;

  constructor(
    private readonly url: string,
    private readonly callbacks: StreamCallbacks,
    options: StreamOptions = {},
  ) {
    this.fetchFn = options.fetchFn ?? fetch.bind(globalThis);
    this.delay = options.delay ?? realDelay;
    this.base = options.baseBackoffMs ?? 500;
    this.max = options.maxBackoffMs ?? 15_000;
  }

  stop(): void {
    this.stopped = true;
  }

  /** Run until stop(); reconnects with exponential backoff. */
  async run(): Promise<void> {
    while (!this.stopped) {
      this.callbacks.onStatus("connecting");
      try {
        await this.consumeOnce();
      } catch {
        // fall through to reconnect
      }
      if (this.stopped) break;
      this.callbacks.onStatus("disconnected");
      await this.delay(backoffMs(this.attempt++, this.base, this.max));
    }
  }

  private async consumeOnce(): Promise<void> {
    const resp = await this.fetchFn(this.url);
    if (!resp.ok || !resp.body) {
      throw new Error(`stream HTTP ${resp.status}`);
    }
    this.callbacks.onStatus("connected");
    this.attempt = 0; // healthy connection resets the backoff
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    const splitter = new LineSplitter();
    for (;;) {
      const { done, value } = await reader.read();
      if (this.stopped) {
        await reader.cancel().catch(() => undefined);
        return;
      }
      if (done) return;
      for (const line of splitter.push(decoder.decode(value, { stream: true }))) {
        const msg = parseLine(line);
        if (msg === null) {
          console.warn("dropping malformed stream frame:", line.slice(0, 120));
          continue;
        }
        this.callbacks.onMessage(msg);
      }
    }
  }
}
