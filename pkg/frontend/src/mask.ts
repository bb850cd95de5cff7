/** Mask drafting: rectangles painted per video frame on the cell grid,
 * serialized to the service's mask JSON schema (untouched frames are
 * omitted and default to all-ones server-side). */

import type { MaskJson } from "./api.js";

export interface Rect {
  top: number;
  left: number;
  height: number;
  width: number;
}

export interface MaskDraft {
  nFrames: number;
  gridH: number;
  gridW: number;
  /** Painted rectangles per frame index; unpainted frames have no entry. */
  rects: Map<number, Rect[]>;
}

export function newMaskDraft(nFrames: number, gridH: number, gridW: number): MaskDraft {
  return { nFrames, gridH, gridW, rects: new Map() };
}

export function normalizeRect(
  a: { row: number; col: number },
  b: { row: number; col: number },
): Rect {
  const top = Math.min(a.row, b.row);
  const left = Math.min(a.col, b.col);
  return {
    top,
    left,
    height: Math.abs(a.row - b.row) + 1,
    width: Math.abs(a.col - b.col) + 1,
  };
}

export function addRect(draft: MaskDraft, frame: number, rect: Rect): MaskDraft {
  if (frame < 0 || frame >= draft.nFrames) throw new Error("frame out of range");
  if (
    rect.top < 0 ||
    rect.left < 0 ||
    rect.height < 1 ||
    rect.width < 1 ||
    rect.top + rect.height > draft.gridH ||
    rect.left + rect.width > draft.gridW
  ) {
    throw new Error("rectangle outside the grid");
  }
  const rects = new Map(draft.rects);
  rects.set(frame, [...(rects.get(frame) ?? []), rect]);
  return { ...draft, rects };
}

export function clearFrame(draft: MaskDraft, frame: number): MaskDraft {
  const rects = new Map(draft.rects);
  rects.delete(frame);
  return { ...draft, rects };
}

export function clearAll(draft: MaskDraft): MaskDraft {
  return { ...draft, rects: new Map() };
}

/** Union of a frame's rectangles as a 0/1 cell grid. */
export function rasterize(draft: MaskDraft, frame: number): number[][] {
  const cells: number[][] = [];
  for (let r = 0; r < draft.gridH; r++) cells.push(new Array(draft.gridW).fill(0));
  for (const rect of draft.rects.get(frame) ?? []) {
    for (let r = rect.top; r < rect.top + rect.height; r++) {
      for (let c = rect.left; c < rect.left + rect.width; c++) {
        cells[r][c] = 1;
      }
    }
  }
  return cells;
}

export function isBlank(draft: MaskDraft): boolean {
  return draft.rects.size === 0;
}

/** Serialize painted frames only; blank drafts serialize to null (no mask). */
export function serializeMask(draft: MaskDraft): MaskJson | null {
  if (isBlank(draft)) return null;
  const frames = [...draft.rects.keys()]
    .sort((a, b) => a - b)
    .map((t) => ({ t, cells: rasterize(draft, t) }));
  return { frames };
}
