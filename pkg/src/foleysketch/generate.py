"""End-to-end generation and evaluation on top of a loaded checkpoint.

The CLI and the HTTP service both call `generate`, so equal requests
with equal seeds produce byte-identical WAVs through either surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .checkpoint import Checkpoint
from .conditioning import ConditionSet, MaskTrack, VisualCondition, toy_visual_features
from .config import ModelConfig, class_id_from_tag
from .denoiser import make_denoise_fn
from .diffusion import GuidanceScales, make_schedule, sample
from .dsp import (AudioBuffer, MelSpectrogram, dequantize, griffin_lim,
                  mel_filterbank, mel_to_magnitude, quantize, wav_bytes)
from .loudness import LoudnessCurve, loudness_pipeline
from .metrics import (band_energy_classify, envelope_correlation,
                      frechet_distance, gaussian_stats, inception_score,
                      kl_divergence, scaled_cosine)
from .synthdata import (EventScript, Event, PairedExample, canonical_region,
                        class_bands, loudness_config)


class RequestError(ValueError):
    """Validation failure with the offending request field attached."""

    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


@dataclass
class GenerationResult:
    audio: AudioBuffer
    wav: bytes
    mel: MelSpectrogram
    latent: np.ndarray
    envelope: LoudnessCurve
    envelope_r: Optional[float]
    predicted_class: int
    class_probs: np.ndarray
    seed: int


def tag_script(tag: int, cfg: ModelConfig) -> EventScript:
    """Canonical one-event script standing in for the 'video' of a tag."""
    return EventScript(cfg.clip_seconds, (Event(
        class_id=tag, onset=0.0, duration=cfg.clip_seconds, gain=0.8,
        region=canonical_region(tag, cfg), envelope="constant"),))


def build_condition(cfg: ModelConfig, tag: Optional[int], mask: Optional[MaskTrack],
                    curve: Optional[LoudnessCurve]) -> ConditionSet:
    """Request fields -> condition triple.

    A tag spawns both the text condition and a canonical-script visual
    condition; the painted mask modulates the latter.  A mask without a
    tag has nothing to mask and is ignored.
    """
    signal = None
    if curve is not None:
        if len(curve) != cfg.curve_len:
            raise RequestError("curve", "curve length mismatch")
        signal = curve.values
    visual = None
    if tag is not None:
        if not 0 <= tag < cfg.n_classes:
            raise RequestError("tag", "unknown tag")
        script = tag_script(tag, cfg)
        f_visual = toy_visual_features(script, None, cfg).tokens
        f_mask = toy_visual_features(script, mask, cfg).tokens
        visual = VisualCondition(f_visual, f_mask)
    return ConditionSet(text=tag, visual=visual, signal=signal)


def mel_from_latent(latent: np.ndarray, ckpt: Checkpoint) -> MelSpectrogram:
    values = latent[:, :, 0].T * ckpt.norm_std + ckpt.norm_mean
    return MelSpectrogram(values, frame_rate=ckpt.cfg.sample_rate / ckpt.cfg.hop)


def latent_from_mel(mel: MelSpectrogram, ckpt: Checkpoint) -> np.ndarray:
    return ((mel.values - ckpt.norm_mean) / ckpt.norm_std).T[:, :, None]


def sample_latent(ckpt: Checkpoint, cond: ConditionSet, scales: GuidanceScales,
                  steps: int, sampler: str, seed: int) -> np.ndarray:
    cfg = ckpt.cfg
    sched = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
    return sample(make_denoise_fn(ckpt.params, cfg), cond, sched, steps,
                  scales, sampler, seed, cfg.latent_shape)


def render_latent(ckpt: Checkpoint, latent: np.ndarray, seed: int,
                  target_curve: Optional[LoudnessCurve] = None) -> GenerationResult:
    """Latent -> mel -> Griffin-Lim audio -> envelope and class read-outs."""
    cfg = ckpt.cfg
    mel = mel_from_latent(latent, ckpt)
    fb = mel_filterbank(cfg.n_fft, cfg.n_mels, cfg.sample_rate, cfg.fmin, cfg.fmax)
    mag = mel_to_magnitude(mel, fb, cfg.n_fft, cfg.hop, cfg.sample_rate)
    raw = griffin_lim(mag, cfg.griffin_lim_iters, seed=seed ^ 0x5EED)
    samples = raw.samples
    peak = np.abs(samples).max()
    if peak > 1.0:  # rescale instead of hard-clipping, preserving the envelope shape
        samples = samples / peak
    audio = AudioBuffer(dequantize(quantize(samples)), cfg.sample_rate)
    envelope = loudness_pipeline(audio, loudness_config(cfg))
    envelope_r = None
    if target_curve is not None:
        try:
            envelope_r = envelope_correlation(envelope, target_curve)
        except ValueError:
            envelope_r = None  # constant curve on either side
    predicted, probs = band_energy_classify(mel, class_bands(cfg))
    return GenerationResult(audio=audio, wav=wav_bytes(audio), mel=mel,
                            latent=latent, envelope=envelope, envelope_r=envelope_r,
                            predicted_class=predicted, class_probs=probs, seed=seed)


def generate(ckpt: Checkpoint, tag=None, mask: Optional[MaskTrack] = None,
             curve: Optional[LoudnessCurve] = None,
             s_text: Optional[float] = None, s_video: Optional[float] = None,
             steps: Optional[int] = None, sampler: str = "ddim",
             seed: Optional[int] = None) -> GenerationResult:
    """Full request path: validate, sample, render, measure."""
    cfg = ckpt.cfg
    tag_id = None
    if tag is not None:
        try:
            tag_id = class_id_from_tag(tag, cfg.n_classes)
        except ValueError as e:
            raise RequestError("tag", str(e)) from None
    s_text = cfg.s_text if s_text is None else s_text
    s_video = cfg.s_video if s_video is None else s_video
    for field_name, value in (("s_text", s_text), ("s_video", s_video)):
        if not (math.isfinite(value) and value >= 0):
            raise RequestError(field_name, f"{field_name} must be finite and >= 0")
    steps = cfg.ddim_steps if steps is None else steps
    if sampler not in ("ddpm", "ddim"):
        raise RequestError("sampler", f"unknown sampler {sampler!r}")
    if not 1 <= steps <= cfg.timesteps:
        raise RequestError("steps", "too many steps" if steps > cfg.timesteps
                           else "steps must be >= 1")
    if sampler == "ddpm" and steps != cfg.timesteps:
        raise RequestError("steps", "ddpm requires steps == timesteps")
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (2 ** 31))
    cond = build_condition(cfg, tag_id, mask, curve)
    latent = sample_latent(ckpt, cond, GuidanceScales(s_text, s_video),
                           steps, sampler, seed)
    return render_latent(ckpt, latent, seed, target_curve=curve)


# --------------------------------------------------------------------------
# checkpoint evaluation over a reference split

def clip_condition(ex: PairedExample, cfg: ModelConfig) -> ConditionSet:
    f_mask = toy_visual_features(ex.script, ex.masks, cfg).tokens
    return ConditionSet(text=ex.tag,
                        visual=VisualCondition(ex.features.tokens, f_mask),
                        signal=ex.curve.values)


def evaluate(ckpt: Checkpoint, examples: Sequence[PairedExample], seed: int = 0,
             steps: Optional[int] = None, sampler: str = "ddim") -> dict:
    """Generate one clip per reference example and score the toy metrics."""
    cfg = ckpt.cfg
    if len(examples) < 2:
        raise ValueError("need at least 2 reference clips")
    steps = steps or cfg.ddim_steps
    scales = GuidanceScales(cfg.s_text, cfg.s_video)
    bands = class_bands(cfg)

    gen_rows, ref_rows = [], []
    gen_feats, ref_feats = [], []
    env_rs, cs_avs = [], []
    for i, ex in enumerate(examples):
        cond = clip_condition(ex, cfg)
        latent = sample_latent(ckpt, cond, scales, steps, sampler, seed + i)
        result = render_latent(ckpt, latent, seed + i, target_curve=ex.curve)
        _, gen_probs = band_energy_classify(result.mel, bands)
        _, ref_probs = band_energy_classify(ex.spec, bands)
        gen_rows.append(gen_probs)
        ref_rows.append(ref_probs)
        gen_feats.append(np.concatenate([gen_probs, [result.envelope.values.mean(),
                                                     result.envelope.values.std()]]))
        ref_feats.append(np.concatenate([ref_probs, [ex.curve.values.mean(),
                                                     ex.curve.values.std()]]))
        if result.envelope_r is not None:
            env_rs.append(result.envelope_r)
        video_embed = ex.features.tokens[:, :cfg.n_classes].mean(axis=0)
        if np.linalg.norm(video_embed) > 0:
            cs_avs.append(scaled_cosine(gen_probs, video_embed))
    gen_rows = np.asarray(gen_rows)
    ref_rows = np.asarray(ref_rows)

    report = {
        "frechet_distance": frechet_distance(gaussian_stats(np.asarray(gen_feats)),
                                             gaussian_stats(np.asarray(ref_feats))),
        "kl_divergence": kl_divergence(ref_rows.mean(axis=0) / ref_rows.mean(axis=0).sum(),
                                       gen_rows.mean(axis=0) / gen_rows.mean(axis=0).sum()),
        "inception_score": inception_score(gen_rows),
        "cs_av": float(np.mean(cs_avs)) if cs_avs else None,
        "envelope_r_median": float(np.median(env_rs)) if env_rs else None,
        "envelope_r_mean": float(np.mean(env_rs)) if env_rs else None,
        "n_clips": len(examples),
        "seed": seed,
        "steps": steps,
        "sampler": sampler,
        "config": cfg.to_dict(),
        "checkpoint": ckpt.checkpoint_id,
    }
    return report
