/**
 * Operator-console view state.
 *
 * `renderEvent` is a pure reducer from `(view, wire record)` to the next
 * view.  Every number shown in the console comes out of this fold over the
 * event stream; the console never recomputes metrics on its own.  Malformed
 * records set an error toast and leave the rest of the view untouched.
 */

import { isSessionEvent, type SessionEvent } from "./protocol.js";

export interface SliceImage {
  plane: string;
  offset: number;
  rotation_deg: number;
  shape: [number, number];
  min: number;
  max: number;
  pixels_b64: string;
}

export interface ChartPoint {
  n: number;
  value: number;
}

export interface Banner {
  suggestedN: number;
  rationale: string;
}

export interface SessionSummary {
  nUsed: number;
  stopReason: string;
  suggestedN: number | null;
  rationale: string;
}

export interface SessionView {
  /** Projections ingested so far; never decreases. */
  n: number;
  lastAngleDeg: number | null;
  /** Most recent orthoslice set, kept across restarts. */
  slices: SliceImage[];
  /** Residual-difference chart points since the last restart. */
  srod: ChartPoint[];
  /** Signal-to-noise chart points since the last restart. */
  snr: ChartPoint[];
  threshold: number | null;
  /** First n with srod below threshold since the last restart. */
  convergedAt: number | null;
  /** n values at which the metric history was restarted. */
  restarts: number[];
  banner: Banner | null;
  controlsEnabled: boolean;
  ended: SessionSummary | null;
  toast: string | null;
  eventCount: number;
}

export function initialView(): SessionView {
  return {
    n: 0,
    lastAngleDeg: null,
    slices: [],
    srod: [],
    snr: [],
    threshold: null,
    convergedAt: null,
    restarts: [],
    banner: null,
    controlsEnabled: true,
    ended: null,
    toast: null,
    eventCount: 0,
  };
}

function isFiniteNumber(value: unknown): value is number {
  return typeof value === "number" && Number.isFinite(value);
}

function isSliceImage(value: unknown): value is SliceImage {
  if (value === null || typeof value !== "object" || Array.isArray(value)) {
    return false;
  }
  const s = value as Record<string, unknown>;
  return (
    typeof s.plane === "string" &&
    isFiniteNumber(s.offset) &&
    isFiniteNumber(s.rotation_deg) &&
    Array.isArray(s.shape) &&
    s.shape.length === 2 &&
    s.shape.every((d) => Number.isInteger(d) && (d as number) > 0) &&
    isFiniteNumber(s.min) &&
    isFiniteNumber(s.max) &&
    typeof s.pixels_b64 === "string"
  );
}

function sliceList(value: unknown): SliceImage[] | null {
  if (!Array.isArray(value) || value.length === 0 || !value.every(isSliceImage)) {
    return null;
  }
  return value as SliceImage[];
}

function reject(view: SessionView, reason: string): SessionView {
  return { ...view, toast: reason };
}

function advance(view: SessionView, event: SessionEvent): SessionView {
  return {
    ...view,
    n: Math.max(view.n, event.n),
    eventCount: view.eventCount + 1,
  };
}

/** Fold one decoded wire record into the view. */
export function renderEvent(view: SessionView, record: unknown): SessionView {
  if (!isSessionEvent(record)) {
    return reject(view, "malformed event record");
  }
  const { kind, payload } = record;

  switch (kind) {
    case "projection_added": {
      if (!isFiniteNumber(payload.angle_deg)) {
        return reject(view, "projection_added without angle_deg");
      }
      return { ...advance(view, record), lastAngleDeg: payload.angle_deg };
    }

    case "slices_updated": {
      const slices = sliceList(payload.slices);
      if (slices === null) {
        return reject(view, "slices_updated without valid slices");
      }
      return { ...advance(view, record), slices };
    }

    case "metrics_updated": {
      const { srod, snr, threshold } = payload;
      if (srod !== null && !isFiniteNumber(srod)) {
        return reject(view, "metrics_updated with invalid srod");
      }
      if (snr !== null && !isFiniteNumber(snr)) {
        return reject(view, "metrics_updated with invalid snr");
      }
      if (!isFiniteNumber(threshold)) {
        return reject(view, "metrics_updated without threshold");
      }
      const next = advance(view, record);
      next.threshold = threshold;
      if (srod !== null) {
        next.srod = [...view.srod, { n: record.n, value: srod as number }];
        if (next.convergedAt === null && (srod as number) < threshold) {
          next.convergedAt = record.n;
        }
      }
      if (snr !== null) {
        next.snr = [...view.snr, { n: record.n, value: snr as number }];
      }
      return next;
    }

    case "stop_suggested": {
      const { suggested_n, rationale } = payload;
      if (!Number.isInteger(suggested_n) || typeof rationale !== "string") {
        return reject(view, "stop_suggested without suggested_n and rationale");
      }
      return {
        ...advance(view, record),
        banner: { suggestedN: suggested_n as number, rationale },
      };
    }

    case "history_restarted": {
      const slices = sliceList(payload.slices);
      if (slices === null) {
        return reject(view, "history_restarted without valid slices");
      }
      return {
        ...advance(view, record),
        slices,
        srod: [],
        snr: [],
        convergedAt: null,
        banner: null,
        restarts: [...view.restarts, record.n],
      };
    }

    case "session_ended": {
      const { n_used, stop_reason } = payload;
      if (!Number.isInteger(n_used) || typeof stop_reason !== "string") {
        return reject(view, "session_ended without n_used and stop_reason");
      }
      const rec = payload.recommendation as Record<string, unknown> | undefined;
      const suggested =
        rec && Number.isInteger(rec.suggested_n) ? (rec.suggested_n as number) : null;
      const rationale = rec && typeof rec.rationale === "string" ? rec.rationale : "";
      return {
        ...advance(view, record),
        controlsEnabled: false,
        ended: {
          nUsed: n_used as number,
          stopReason: stop_reason,
          suggestedN: suggested,
          rationale,
        },
      };
    }

    default:
      return reject(view, `unknown event kind ${JSON.stringify(kind)}`);
  }
}

/** Fold a whole sequence of records, e.g. a recorded event log. */
export function replayEvents(records: Iterable<unknown>, start?: SessionView): SessionView {
  let view = start ?? initialView();
  for (const record of records) {
    view = renderEvent(view, record);
  }
  return view;
}

/** Decode a slice payload into its row-major float pixel grid. */
export function decodeSlicePixels(slice: SliceImage): Float32Array {
  const raw = Buffer.from(slice.pixels_b64, "base64");
  const [rows, cols] = slice.shape;
  if (raw.length !== rows * cols * 4) {
    throw new Error(
      `slice ${slice.plane} carries ${raw.length} bytes, expected ${rows * cols * 4}`,
    );
  }
  return new Float32Array(raw.buffer, raw.byteOffset, rows * cols);
}

/** Map slice pixels onto 8-bit grayscale using the slice's own min/max. */
export function toGrayscale(slice: SliceImage): Uint8ClampedArray {
  const pixels = decodeSlicePixels(slice);
  const span = slice.max - slice.min;
  const out = new Uint8ClampedArray(pixels.length);
  for (let i = 0; i < pixels.length; i += 1) {
    const pixel = pixels[i] as number;
    out[i] = span > 0 ? Math.round(((pixel - slice.min) / span) * 255) : 0;
  }
  return out;
}
