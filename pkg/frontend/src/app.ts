/** DOM wiring: curve editor, mask painter, generation controls, playback,
 * envelope overlay, mel heatmap and the mixing tray. */

import { ApiClient, ApiError, wavToObjectUrl } from "./api.js";
import type { GenerateRequest, GenerateResponse, ServiceConfig } from "./api.js";
import * as curve from "./curve.js";
import * as mask from "./mask.js";
import * as tray from "./tray.js";
import { drawCurveEditor, drawMaskGrid, drawMelHeatmap, CURVE_MAX } from "./plot.js";

const api = new ApiClient("");

interface AppState {
  config: ServiceConfig;
  curveDraft: curve.CurveDraft;
  maskDraft: mask.MaskDraft;
  maskFrame: number;
  maskAnchor: { row: number; col: number } | null;
  tray: tray.TrayState;
  lastResponse: GenerateResponse | null;
  busy: boolean;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setStatus(message: string, isError = false): void {
  const box = el<HTMLDivElement>("status");
  box.textContent = message;
  box.className = isError ? "status error" : "status";
}

function canvasFraction(canvas: HTMLCanvasElement, ev: PointerEvent) {
  const rect = canvas.getBoundingClientRect();
  return {
    x: (ev.clientX - rect.left) / rect.width,
    y: (ev.clientY - rect.top) / rect.height,
  };
}

function redrawCurve(state: AppState): void {
  const achieved = state.lastResponse?.achieved_envelope.values ?? null;
  drawCurveEditor(el<HTMLCanvasElement>("curve-canvas"), state.curveDraft, achieved);
}

function redrawMask(state: AppState): void {
  drawMaskGrid(el<HTMLCanvasElement>("mask-canvas"), state.maskDraft,
    state.maskFrame, null);
}

function redrawTray(state: AppState): void {
  const list = el<HTMLUListElement>("tray-list");
  list.innerHTML = "";
  for (const clip of state.tray.clips) {
    const item = document.createElement("li");
    const label = document.createElement("span");
    label.textContent = clip.label;
    const play = document.createElement("button");
    play.textContent = "play";
    play.addEventListener("click", () => {
      el<HTMLAudioElement>("player").src = wavToObjectUrl(clip.wavB64);
      void el<HTMLAudioElement>("player").play();
    });
    const drop = document.createElement("button");
    drop.textContent = "remove";
    drop.addEventListener("click", () => {
      state.tray = tray.removeClip(state.tray, clip.id);
      redrawTray(state);
    });
    item.append(label, play, drop);
    list.append(item);
  }
  el<HTMLButtonElement>("mix-button").disabled = !tray.canMix(state.tray) || state.busy;
}

function buildRequest(state: AppState): GenerateRequest {
  const tagSel = el<HTMLSelectElement>("tag-select");
  const seedRaw = el<HTMLInputElement>("seed-input").value.trim();
  const req: GenerateRequest = {
    curve: curve.isBlank(state.curveDraft)
      ? null
      : curve.serializeCurve(state.curveDraft),
    mask: mask.serializeMask(state.maskDraft),
    tag: tagSel.value === "" ? null : tagSel.value,
    s_text: Number(el<HTMLInputElement>("s-text").value),
    s_video: Number(el<HTMLInputElement>("s-video").value),
    steps: Number(el<HTMLInputElement>("steps-input").value),
    sampler: el<HTMLSelectElement>("sampler-select").value,
    seed: seedRaw === "" ? null : Number(seedRaw),
  };
  return req;
}

function showResponse(state: AppState, res: GenerateResponse): void {
  state.lastResponse = res;
  el<HTMLAudioElement>("player").src = wavToObjectUrl(res.wav);
  void el<HTMLAudioElement>("player").play().catch(() => undefined);
  el<HTMLSpanElement>("result-seed").textContent = String(res.seed);
  el<HTMLSpanElement>("result-class").textContent = res.predicted_class_name;
  // envelope_r is rendered exactly as the server sent it
  el<HTMLSpanElement>("result-r").textContent =
    res.envelope_r === null ? "n/a" : String(res.envelope_r);
  drawMelHeatmap(el<HTMLCanvasElement>("mel-canvas"), res.mel.values);
  redrawCurve(state);
}

async function onGenerate(state: AppState): Promise<void> {
  if (state.busy) return;
  state.busy = true;
  el<HTMLButtonElement>("generate-button").disabled = true;
  setStatus("generating...");
  try {
    const req = buildRequest(state);
    if (req.curve && req.curve.values.length !== state.config.curve_length) {
      throw new ApiError(0, { field: "curve", message: "curve length mismatch" });
    }
    const res = await api.generate(req);
    showResponse(state, res);
    state.tray = tray.addClip(
      state.tray,
      `${res.predicted_class_name} seed=${res.seed}`,
      res.wav,
      res.seed,
    );
    redrawTray(state);
    setStatus("done");
  } catch (err) {
    if (err instanceof ApiError) {
      setStatus(`${err.detail.field ?? "request"}: ${err.detail.message}`, true);
    } else {
      setStatus(String(err), true);
    }
  } finally {
    state.busy = false;
    el<HTMLButtonElement>("generate-button").disabled = false;
    redrawTray(state);
  }
}

async function onMix(state: AppState): Promise<void> {
  if (!tray.canMix(state.tray) || state.busy) return;
  state.busy = true;
  setStatus("mixing...");
  try {
    const res = await api.mix(tray.mixPayload(state.tray));
    el<HTMLAudioElement>("player").src = wavToObjectUrl(res.wav);
    void el<HTMLAudioElement>("player").play().catch(() => undefined);
    setStatus(`mixed ${state.tray.clips.length} clips`);
  } catch (err) {
    setStatus(err instanceof ApiError ? err.detail.message : String(err), true);
  } finally {
    state.busy = false;
    redrawTray(state);
  }
}

function wireCurveCanvas(state: AppState): void {
  const canvas = el<HTMLCanvasElement>("curve-canvas");
  let drawing = false;
  const sample = (ev: PointerEvent) => {
    const { x, y } = canvasFraction(canvas, ev);
    state.curveDraft = curve.dragTo(state.curveDraft, x, (1 - y) * CURVE_MAX);
    redrawCurve(state);
  };
  canvas.addEventListener("pointerdown", (ev) => {
    drawing = true;
    canvas.setPointerCapture(ev.pointerId);
    sample(ev);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (drawing) sample(ev);
  });
  const stop = () => {
    drawing = false;
    state.curveDraft = curve.endStroke(state.curveDraft);
  };
  canvas.addEventListener("pointerup", stop);
  canvas.addEventListener("pointercancel", stop);
  el<HTMLButtonElement>("curve-clear").addEventListener("click", () => {
    state.curveDraft = curve.newCurveDraft(
      state.config.curve_length, state.config.curve_rate);
    redrawCurve(state);
  });
}

function wireMaskCanvas(state: AppState): void {
  const canvas = el<HTMLCanvasElement>("mask-canvas");
  const cellAt = (ev: PointerEvent) => {
    const { x, y } = canvasFraction(canvas, ev);
    return {
      row: Math.min(Math.max(Math.floor(y * state.maskDraft.gridH), 0),
        state.maskDraft.gridH - 1),
      col: Math.min(Math.max(Math.floor(x * state.maskDraft.gridW), 0),
        state.maskDraft.gridW - 1),
    };
  };
  canvas.addEventListener("pointerdown", (ev) => {
    state.maskAnchor = cellAt(ev);
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!state.maskAnchor) return;
    const rect = mask.normalizeRect(state.maskAnchor, cellAt(ev));
    drawMaskGrid(canvas, state.maskDraft, state.maskFrame,
      { cells: previewCells(state, rect) });
  });
  canvas.addEventListener("pointerup", (ev) => {
    if (!state.maskAnchor) return;
    const rect = mask.normalizeRect(state.maskAnchor, cellAt(ev));
    state.maskDraft = mask.addRect(state.maskDraft, state.maskFrame, rect);
    if (el<HTMLInputElement>("mask-all-frames").checked) {
      for (let t = 0; t < state.maskDraft.nFrames; t++) {
        if (t !== state.maskFrame) {
          state.maskDraft = mask.addRect(state.maskDraft, t, rect);
        }
      }
    }
    state.maskAnchor = null;
    redrawMask(state);
  });
  el<HTMLButtonElement>("mask-clear").addEventListener("click", () => {
    state.maskDraft = mask.clearAll(state.maskDraft);
    redrawMask(state);
  });
  el<HTMLSelectElement>("mask-frame-select").addEventListener("change", (ev) => {
    state.maskFrame = Number((ev.target as HTMLSelectElement).value);
    redrawMask(state);
  });
}

function previewCells(state: AppState, rect: mask.Rect): number[][] {
  const cells: number[][] = [];
  for (let r = 0; r < state.maskDraft.gridH; r++) {
    cells.push(new Array(state.maskDraft.gridW).fill(0));
  }
  for (let r = rect.top; r < rect.top + rect.height; r++) {
    for (let c = rect.left; c < rect.left + rect.width; c++) cells[r][c] = 1;
  }
  return cells;
}

async function boot(): Promise<void> {
  setStatus("loading config...");
  const config = await api.config();
  const state: AppState = {
    config,
    curveDraft: curve.newCurveDraft(config.curve_length, config.curve_rate),
    maskDraft: mask.newMaskDraft(config.mask_frames, config.grid_h, config.grid_w),
    maskFrame: 0,
    maskAnchor: null,
    tray: tray.newTray(),
    lastResponse: null,
    busy: false,
  };

  const tagSel = el<HTMLSelectElement>("tag-select");
  tagSel.innerHTML = '<option value="">(no tag)</option>';
  for (const name of config.classes) {
    const opt = document.createElement("option");
    opt.value = name;
    opt.textContent = name;
    tagSel.append(opt);
  }
  const frameSel = el<HTMLSelectElement>("mask-frame-select");
  frameSel.innerHTML = "";
  for (let t = 0; t < config.mask_frames; t++) {
    const opt = document.createElement("option");
    opt.value = String(t);
    opt.textContent = `frame ${t}`;
    frameSel.append(opt);
  }
  el<HTMLInputElement>("s-text").value = String(config.s_text);
  el<HTMLInputElement>("s-video").value = String(config.s_video);
  el<HTMLInputElement>("steps-input").value = String(config.default_steps);
  el<HTMLSpanElement>("config-info").textContent =
    `checkpoint ${config.checkpoint} | ${config.curve_length} curve points @ ` +
    `${config.curve_rate}/s | ${config.mask_frames} mask frames of ` +
    `${config.grid_h}x${config.grid_w}`;

  wireCurveCanvas(state);
  wireMaskCanvas(state);
  el<HTMLButtonElement>("generate-button").addEventListener("click", () => {
    void onGenerate(state);
  });
  el<HTMLButtonElement>("mix-button").addEventListener("click", () => {
    void onMix(state);
  });

  redrawCurve(state);
  redrawMask(state);
  redrawTray(state);
  setStatus("ready");
}

boot().catch((err) => setStatus(`failed to load: ${err}`, true));
