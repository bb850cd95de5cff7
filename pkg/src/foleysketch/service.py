"""HTTP generation service.

Endpoints: GET /health, GET /config, POST /generate, POST /mix.  All
JSON UTF-8.  Validation failures return 400 with a field-level message;
malformed JSON returns 400; unexpected failures return 500 with an
opaque incident id.  The checkpoint is loaded once as an immutable
snapshot; request handlers share it read-only and each request owns its
own generator state, so generation is byte-identical to the CLI for
equal requests and seeds.
"""

from __future__ import annotations

import base64
import binascii
import uuid
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from .checkpoint import Checkpoint
from .config import CLASS_NAMES
from .conditioning import MaskTrack
from .dsp import audio_from_wav_bytes, mix_audio, wav_bytes
from .generate import RequestError, generate
from .loudness import LoudnessCurve


def _bad_request(field, message: str) -> JSONResponse:
    return JSONResponse(status_code=400,
                        content={"detail": {"field": field, "message": message}})


def create_app(ckpt: Checkpoint, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="foleysketch", version="0.1.0")
    cfg = ckpt.cfg

    @app.exception_handler(Exception)
    async def internal_error(request: Request, exc: Exception):
        return JSONResponse(status_code=500,
                            content={"error": "internal", "id": uuid.uuid4().hex})

    @app.get("/health")
    def health():
        return {"status": "ok", "checkpoint": ckpt.checkpoint_id}

    @app.get("/config")
    def config():
        return {
            "checkpoint": ckpt.checkpoint_id,
            "classes": list(CLASS_NAMES[:cfg.n_classes]),
            "curve_length": cfg.curve_len,
            "curve_rate": cfg.curve_rate,
            "clip_seconds": cfg.clip_seconds,
            "mask_frames": cfg.n_frames_video,
            "grid_h": cfg.grid_h,
            "grid_w": cfg.grid_w,
            "mel_bins": cfg.n_mels,
            "mel_frames": cfg.n_spec_frames,
            "timesteps": cfg.timesteps,
            "default_steps": cfg.ddim_steps,
            "default_sampler": "ddim",
            "s_text": cfg.s_text,
            "s_video": cfg.s_video,
            "model": cfg.to_dict(),
        }

    @app.post("/generate")
    async def generate_endpoint(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _bad_request("body", "malformed JSON")
        if not isinstance(body, dict):
            return _bad_request("body", "request must be a JSON object")

        allowed = {"curve", "mask", "tag", "s_text", "s_video", "steps",
                   "sampler", "seed"}
        unknown = set(body) - allowed
        if unknown:
            return _bad_request(sorted(unknown)[0], "unknown field")
        try:
            curve = None
            if body.get("curve") is not None:
                curve = LoudnessCurve.from_json(body["curve"])
            mask = None
            if body.get("mask") is not None:
                mask = MaskTrack.from_json(body["mask"], cfg.n_frames_video,
                                           cfg.grid_h, cfg.grid_w)
        except (ValueError, TypeError, KeyError) as e:
            field = "curve" if "curve" in str(e).lower() else "mask"
            return _bad_request(field, str(e))

        def typed(name, kinds):
            v = body.get(name)
            if v is not None and not isinstance(v, kinds):
                raise RequestError(name, f"{name} has wrong type")
            return v

        try:
            tag = typed("tag", (str, int))
            s_text = typed("s_text", (int, float))
            s_video = typed("s_video", (int, float))
            steps = typed("steps", int)
            sampler = typed("sampler", str) or "ddim"
            seed = typed("seed", int)
            result = await run_in_threadpool(
                generate, ckpt, tag=tag, mask=mask, curve=curve, s_text=s_text,
                s_video=s_video, steps=steps, sampler=sampler, seed=seed)
        except RequestError as e:
            return _bad_request(e.field, str(e))

        return {
            "wav": base64.b64encode(result.wav).decode("ascii"),
            "mel": {"frame_rate": result.mel.frame_rate,
                    "values": result.mel.values.tolist()},
            "achieved_envelope": result.envelope.to_json(),
            "envelope_r": result.envelope_r,
            "predicted_class": result.predicted_class,
            "predicted_class_name": CLASS_NAMES[result.predicted_class],
            "seed": result.seed,
        }

    @app.post("/mix")
    async def mix_endpoint(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _bad_request("body", "malformed JSON")
        clips_b64 = body.get("clips") if isinstance(body, dict) else None
        if not isinstance(clips_b64, list) or not clips_b64:
            return _bad_request("clips", "no clips")
        clips = []
        for i, b64 in enumerate(clips_b64):
            try:
                clips.append(audio_from_wav_bytes(base64.b64decode(b64, validate=True)))
            except (ValueError, TypeError, binascii.Error) as e:
                return _bad_request("clips", f"clip {i}: {e}")
        try:
            mixed = await run_in_threadpool(mix_audio, clips)
        except ValueError as e:
            return _bad_request("clips", str(e))
        return {"wav": base64.b64encode(wav_bytes(mixed)).decode("ascii")}

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles
        if not Path(ui_dir).is_dir():
            raise ValueError(f"UI directory {ui_dir} does not exist")
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
