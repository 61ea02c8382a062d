import { describe, expect, it } from "vitest";

import {
  EVENT_KINDS,
  FrameDecoder,
  MAX_FRAME_BYTES,
  ProtocolError,
  canonicalJson,
  encodeFrame,
  isSessionEvent,
} from "../src/protocol.js";

describe("canonicalJson", () => {
  it("sorts object keys recursively and stays compact", () => {
    const text = canonicalJson({ b: 1, a: [{ z: 2, y: null }] });
    expect(text).toBe('{"a":[{"y":null,"z":2}],"b":1}');
  });
});

describe("encodeFrame", () => {
  it("prefixes the body with its big-endian length", () => {
    const frame = encodeFrame({ kind: "x", n: 1, payload: {} });
    const body = frame.subarray(4);
    expect(frame.readUInt32BE(0)).toBe(body.length);
    expect(JSON.parse(body.toString("utf-8"))).toEqual({ kind: "x", n: 1, payload: {} });
  });

  it("rejects bodies above the frame limit", () => {
    const huge = { blob: "x".repeat(MAX_FRAME_BYTES) };
    expect(() => encodeFrame(huge)).toThrow(ProtocolError);
  });
});

describe("FrameDecoder", () => {
  it("round-trips a record through encode and feed", () => {
    const record = { kind: "metrics_updated", n: 4, payload: { srod: 0.25, snr: null } };
    const decoder = new FrameDecoder();
    expect(decoder.feed(encodeFrame(record))).toEqual([record]);
  });

  it("reassembles frames fed in 3-byte chunks", () => {
    const records = [
      { kind: "projection_added", n: 1, payload: { angle_deg: -12.5 } },
      { kind: "session_ended", n: 2, payload: { n_used: 2 } },
    ];
    const stream = Buffer.concat(records.map(encodeFrame));
    const decoder = new FrameDecoder();
    const seen: unknown[] = [];
    for (let i = 0; i < stream.length; i += 3) {
      seen.push(...decoder.feed(stream.subarray(i, i + 3)));
    }
    expect(seen).toEqual(records);
  });

  it("returns every frame completed by one chunk", () => {
    const records = [0, 1, 2].map((n) => ({ kind: "projection_added", n, payload: {} }));
    const decoder = new FrameDecoder();
    expect(decoder.feed(Buffer.concat(records.map(encodeFrame)))).toEqual(records);
  });

  it("rejects frames whose declared length exceeds the limit", () => {
    const header = Buffer.alloc(4);
    header.writeUInt32BE(MAX_FRAME_BYTES + 1, 0);
    expect(() => new FrameDecoder().feed(header)).toThrow(ProtocolError);
  });

  it("rejects bodies that are not JSON", () => {
    const body = Buffer.from("not json", "utf-8");
    const frame = Buffer.concat([Buffer.alloc(4), body]);
    frame.writeUInt32BE(body.length, 0);
    expect(() => new FrameDecoder().feed(frame)).toThrow(ProtocolError);
  });
});

describe("isSessionEvent", () => {
  it("accepts the event shape and lists the kinds in precedence order", () => {
    expect(EVENT_KINDS[0]).toBe("projection_added");
    expect(EVENT_KINDS[EVENT_KINDS.length - 1]).toBe("session_ended");
    expect(isSessionEvent({ kind: "projection_added", n: 0, payload: {} })).toBe(true);
  });

  it("rejects records missing fields or with wrong types", () => {
    expect(isSessionEvent(null)).toBe(false);
    expect(isSessionEvent([])).toBe(false);
    expect(isSessionEvent({ kind: "x", n: 1.5, payload: {} })).toBe(false);
    expect(isSessionEvent({ kind: "x", n: -1, payload: {} })).toBe(false);
    expect(isSessionEvent({ kind: "x", n: 1, payload: [] })).toBe(false);
    expect(isSessionEvent({ kind: 7, n: 1, payload: {} })).toBe(false);
  });
});
