/**
 * Wire codec for the acquisition session event socket.
 *
 * Frames are a 4-byte big-endian unsigned length followed by a UTF-8 JSON
 * body.  Events are objects of the form `{kind, n, payload}`; control
 * commands travel the other direction as plain JSON objects with a
 * `command` field.  Object keys are serialized in sorted order so a given
 * record always has one encoding.
 */

/** Upper bound on a single frame body, matching the session publisher. */
export const MAX_FRAME_BYTES = 64 * 1024 * 1024;

/** Event kinds in precedence order (earlier kinds sort first within an n). */
export const EVENT_KINDS = [
  "projection_added",
  "slices_updated",
  "metrics_updated",
  "stop_suggested",
  "history_restarted",
  "session_ended",
] as const;

export type EventKind = (typeof EVENT_KINDS)[number];

/** Reply kinds that only ever appear on the wire, never in event logs. */
export const REPLY_KINDS = ["control_ack", "control_error"] as const;

export interface SessionEvent {
  kind: string;
  n: number;
  payload: Record<string, unknown>;
}

export class ProtocolError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ProtocolError";
  }
}

function canonicalize(value: unknown): unknown {
  if (Array.isArray(value)) {
    return value.map(canonicalize);
  }
  if (value !== null && typeof value === "object") {
    const source = value as Record<string, unknown>;
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(source).sort()) {
      out[key] = canonicalize(source[key]);
    }
    return out;
  }
  return value;
}

/** Serialize a record as compact JSON with sorted object keys. */
export function canonicalJson(record: unknown): string {
  return JSON.stringify(canonicalize(record));
}

/** Encode one record as a length-prefixed frame. */
export function encodeFrame(record: unknown): Buffer {
  const body = Buffer.from(canonicalJson(record), "utf-8");
  if (body.length > MAX_FRAME_BYTES) {
    throw new ProtocolError(`frame body of ${body.length} bytes exceeds limit`);
  }
  const frame = Buffer.allocUnsafe(4 + body.length);
  frame.writeUInt32BE(body.length, 0);
  body.copy(frame, 4);
  return frame;
}

/**
 * Incremental frame decoder.
 *
 * Feed raw socket chunks in any fragmentation; each call returns the
 * records completed by that chunk, in order.  Oversized or malformed
 * frames raise `ProtocolError`, after which the decoder must be discarded.
 */
export class FrameDecoder {
  private pending: Buffer = Buffer.alloc(0);

  feed(chunk: Buffer): unknown[] {
    this.pending = this.pending.length === 0 ? chunk : Buffer.concat([this.pending, chunk]);
    const records: unknown[] = [];
    while (this.pending.length >= 4) {
      const length = this.pending.readUInt32BE(0);
      if (length > MAX_FRAME_BYTES) {
        throw new ProtocolError(`frame of ${length} bytes exceeds ${MAX_FRAME_BYTES}`);
      }
      if (this.pending.length < 4 + length) {
        break;
      }
      const body = this.pending.subarray(4, 4 + length).toString("utf-8");
      this.pending = this.pending.subarray(4 + length);
      let record: unknown;
      try {
        record = JSON.parse(body);
      } catch (error) {
        throw new ProtocolError(`frame body is not valid JSON: ${String(error)}`);
      }
      records.push(record);
    }
    return records;
  }
}

/** True when a decoded record has the `{kind, n, payload}` event shape. */
export function isSessionEvent(record: unknown): record is SessionEvent {
  if (record === null || typeof record !== "object" || Array.isArray(record)) {
    return false;
  }
  const candidate = record as Record<string, unknown>;
  return (
    typeof candidate.kind === "string" &&
    typeof candidate.n === "number" &&
    Number.isInteger(candidate.n) &&
    candidate.n >= 0 &&
    candidate.payload !== null &&
    typeof candidate.payload === "object" &&
    !Array.isArray(candidate.payload)
  );
}
