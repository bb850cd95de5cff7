/** Canvas rendering: curve editor, achieved-envelope overlay, mel heatmap,
 * and the mask painting grid. */

import type { CurveDraft } from "./curve.js";
import type { MaskDraft } from "./mask.js";
import { rasterize } from "./mask.js";

export const CURVE_MAX = 1.0;

function polyline(
  ctx: CanvasRenderingContext2D,
  values: number[],
  maxValue: number,
  width: number,
  height: number,
): void {
  ctx.beginPath();
  values.forEach((v, i) => {
    const x = (i / (values.length - 1)) * (width - 8) + 4;
    const y = height - 4 - (Math.min(v, maxValue) / maxValue) * (height - 8);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
}

export function drawCurveEditor(
  canvas: HTMLCanvasElement,
  draft: CurveDraft,
  achieved: number[] | null,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#101418";
  ctx.fillRect(0, 0, width, height);

  ctx.strokeStyle = "#2a323c";
  ctx.lineWidth = 1;
  for (let i = 0; i < draft.points.length; i++) {
    const x = (i / (draft.points.length - 1)) * (width - 8) + 4;
    ctx.beginPath();
    ctx.moveTo(x, 4);
    ctx.lineTo(x, height - 4);
    ctx.stroke();
  }

  const achievedMax = achieved ? Math.max(...achieved, 1e-9) : 1;
  if (achieved && achieved.length > 1) {
    ctx.strokeStyle = "#e0a030";
    ctx.lineWidth = 2;
    polyline(ctx, achieved, Math.max(achievedMax, 1e-9), width, height);
  }

  ctx.strokeStyle = "#4fd1c5";
  ctx.lineWidth = 2;
  polyline(ctx, draft.points, CURVE_MAX, width, height);

  ctx.fillStyle = "#4fd1c5";
  draft.points.forEach((v, i) => {
    const x = (i / (draft.points.length - 1)) * (width - 8) + 4;
    const y = height - 4 - (v / CURVE_MAX) * (height - 8);
    ctx.beginPath();
    ctx.arc(x, y, 2.5, 0, Math.PI * 2);
    ctx.fill();
  });
}

/** Map a mel value to a simple dark-to-bright color ramp. */
function heatColor(t: number): [number, number, number] {
  const x = Math.min(Math.max(t, 0), 1);
  return [
    Math.round(255 * Math.min(1, 3 * x)),
    Math.round(255 * Math.min(1, Math.max(0, 3 * x - 1))),
    Math.round(255 * Math.min(1, Math.max(0, 3 * x - 2))),
  ];
}

export function drawMelHeatmap(canvas: HTMLCanvasElement, mel: number[][]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx || mel.length === 0) return;
  const frames = mel.length;
  const bins = mel[0].length;
  let lo = Infinity;
  let hi = -Infinity;
  for (const row of mel) {
    for (const v of row) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  const span = hi - lo || 1;
  const img = ctx.createImageData(frames, bins);
  for (let f = 0; f < frames; f++) {
    for (let b = 0; b < bins; b++) {
      const [r, g, bl] = heatColor((mel[f][b] - lo) / span);
      // low mel bins at the bottom
      const o = ((bins - 1 - b) * frames + f) * 4;
      img.data[o] = r;
      img.data[o + 1] = g;
      img.data[o + 2] = bl;
      img.data[o + 3] = 255;
    }
  }
  const off = document.createElement("canvas");
  off.width = frames;
  off.height = bins;
  off.getContext("2d")?.putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

export function drawMaskGrid(
  canvas: HTMLCanvasElement,
  draft: MaskDraft,
  frame: number,
  preview: { cells: number[][] } | null,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const cw = canvas.width / draft.gridW;
  const ch = canvas.height / draft.gridH;
  const cells = rasterize(draft, frame);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#101418";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  for (let r = 0; r < draft.gridH; r++) {
    for (let c = 0; c < draft.gridW; c++) {
      const painted = cells[r][c] === 1;
      const previewed = preview !== null && preview.cells[r][c] === 1;
      if (painted || previewed) {
        ctx.fillStyle = previewed && !painted ? "rgba(79,209,197,0.35)" : "#2b6f68";
        ctx.fillRect(c * cw + 1, r * ch + 1, cw - 2, ch - 2);
      }
    }
  }
  ctx.strokeStyle = "#2a323c";
  ctx.lineWidth = 1;
  for (let r = 0; r <= draft.gridH; r++) {
    ctx.beginPath();
    ctx.moveTo(0, r * ch);
    ctx.lineTo(canvas.width, r * ch);
    ctx.stroke();
  }
  for (let c = 0; c <= draft.gridW; c++) {
    ctx.beginPath();
    ctx.moveTo(c * cw, 0);
    ctx.lineTo(c * cw, canvas.height);
    ctx.stroke();
  }
}
