/** Loudness-curve drafting: one handle per grid point, drag editing,
 * serialization to the service's curve JSON schema. */

import type { CurveJson } from "./api.js";

export interface CurveDraft {
  /** One nonnegative value per grid point (length = model curve length). */
  points: number[];
  rate: number;
  /** Grid index of the last drag sample, for stroke interpolation. */
  lastIndex: number | null;
}

export function newCurveDraft(length: number, rate: number): CurveDraft {
  return { points: new Array(length).fill(0), rate, lastIndex: null };
}

export function clampValue(v: number, maxValue: number): number {
  return Math.min(Math.max(v, 0), maxValue);
}

/** Snap a pointer x-fraction (0..1 across the canvas) to the nearest grid index. */
export function snapIndex(xFraction: number, length: number): number {
  const i = Math.round(xFraction * (length - 1));
  return Math.min(Math.max(i, 0), length - 1);
}

/**
 * Apply one drag sample at (xFraction, value).  Values between the previous
 * drag sample and this one are linearly interpolated so fast strokes leave
 * no gaps; x motion only ever edits the snapped grid columns.
 */
export function dragTo(
  draft: CurveDraft,
  xFraction: number,
  value: number,
  maxValue = 1,
): CurveDraft {
  const idx = snapIndex(xFraction, draft.points.length);
  const v = clampValue(value, maxValue);
  const points = draft.points.slice();
  if (draft.lastIndex === null || draft.lastIndex === idx) {
    points[idx] = v;
  } else {
    const from = draft.lastIndex;
    const span = idx - from;
    const vFrom = points[from];
    const step = span > 0 ? 1 : -1;
    for (let i = from + step; i !== idx + step; i += step) {
      const t = (i - from) / span;
      points[i] = clampValue(vFrom + t * (v - vFrom), maxValue);
    }
  }
  return { points, rate: draft.rate, lastIndex: idx };
}

export function endStroke(draft: CurveDraft): CurveDraft {
  return { ...draft, lastIndex: null };
}

export function serializeCurve(draft: CurveDraft): CurveJson {
  return { rate: draft.rate, values: draft.points.slice() };
}

export function parseCurve(json: CurveJson, expectedLength: number): CurveDraft {
  if (!Array.isArray(json.values)) {
    throw new Error("curve JSON must hold a values array");
  }
  if (json.values.length !== expectedLength) {
    throw new Error(
      `curve length mismatch: got ${json.values.length}, expected ${expectedLength}`,
    );
  }
  for (const v of json.values) {
    if (typeof v !== "number" || !Number.isFinite(v) || v < 0) {
      throw new Error("curve values must be finite and >= 0");
    }
  }
  return { points: json.values.slice(), rate: json.rate, lastIndex: null };
}

/** True when every point is zero (nothing drawn; send no curve). */
export function isBlank(draft: CurveDraft): boolean {
  return draft.points.every((v) => v === 0);
}
