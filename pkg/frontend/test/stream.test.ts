import { describe, expect, it } from "vitest";

import { LineSplitter, StreamClient, backoffMs, parseLine } from "../src/stream.js";

describe("LineSplitter", () => {
  it("reassembles lines across chunk boundaries", () => {
    const s = new LineSplitter();
    expect(s.push('{"a":')).toEqual([]);
    expect(s.push('1}\n{"b":2}\n{"c"')).toEqual(['{"a":1}', '{"b":2}']);
    expect(s.push(":3}\n")).toEqual(['{"c":3}']);
  });

  it("skips blank lines", () => {
    const s = new LineSplitter();
    expect(s.push("\n\n{\"x\":1}\n\n")).toEqual(['{"x":1}']);
  });
});

describe("parseLine", () => {
  it("parses objects and rejects garbage", () => {
    expect(parseLine('{"type":"reading"}')).toEqual({ type: "reading" });
    expect(parseLine("not json")).toBeNull();
    expect(parseLine("42")).toBeNull();
    expect(parseLine("null")).toBeNull();
  });
});

describe("backoffMs", () => {
  it("doubles up to the cap", () => {
    expect(backoffMs(0)).toBe(500);
    expect(backoffMs(1)).toBe(1000);
    expect(backoffMs(2)).toBe(2000);
    expect(backoffMs(10)).toBe(15_000);
    expect(backoffMs(50)).toBe(15_000);
  });
});

function ndjsonResponse(lines: string[]): Response {
  const encoder = new TextEncoder();
  const body = new ReadableStream<Uint8Array>({
    start(controller) {
      for (const line of lines) controller.enqueue(encoder.encode(line));
      controller.close();
    },
  });
  return new Response(body, { status: 200 });
}

describe("StreamClient", () => {
  it("delivers messages, skips malformed frames, reconnects after EOF", async () => {
    const connections: string[][] = [
      ['{"type":"reading","seq":1}\n', "BROKEN{\n", '{"type":"alarm","id":1}\n'],
      ['{"type":"reading","seq":2}\n'],
    ];
    let calls = 0;
    const messages: unknown[] = [];
    const statuses: string[] = [];
    const client = new StreamClient(
      "http://test/stream",
      {
        onMessage: (m) => messages.push(m),
        onStatus: (s) => statuses.push(s),
      },
      {
        fetchFn: async () => {
          const i = Math.min(calls, connections.length - 1);
          calls += 1;
          if (calls > connections.length) client.stop();
          return ndjsonResponse(connections[i]);
        },
        delay: async () => undefined,
      },
    );
    await client.run();
    expect(messages).toEqual([
      { type: "reading", seq: 1 },
      { type: "alarm", id: 1 },
      { type: "reading", seq: 2 },
    ]);
    expect(statuses[0]).toBe("connecting");
    expect(statuses).toContain("connected");
    expect(statuses).toContain("disconnected");
  });

  it("treats HTTP errors as disconnects and retries", async () => {
    let calls = 0;
    const statuses: string[] = [];
    const client = new StreamClient(
      "http://test/stream",
      { onMessage: () => undefined, onStatus: (s) => statuses.push(s) },
      {
        fetchFn: async () => {
          calls += 1;
          if (calls >= 3) client.stop();
          return new Response("nope", { status: 503 });
        },
        delay: async () => undefined,
      },
    );
    await client.run();
    expect(calls).toBeGreaterThanOrEqual(3);
    expect(statuses.filter((s) => s === "disconnected").length).toBeGreaterThanOrEqual(2);
    expect(statuses).not.toContain("connected");
  });

  it("stop() ends the loop promptly", async () => {
    const client = new StreamClient(
      "http://test/stream",
      { onMessage: () => undefined, onStatus: () => undefined },
      {
        fetchFn: async () => ndjsonResponse([]),
        delay: async () => client.stop(),
      },
    );
    await client.run(); // resolves rather than spinning forever
    expect(true).toBe(true);
  });
});
