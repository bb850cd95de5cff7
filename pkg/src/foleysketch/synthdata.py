"""Synthetic paired clips from a small event grammar.

Each clip is 1-3 tone events.  The four classes are pure sines whose
fundamentals sit exactly on mel-filter centers (computed from the
configured filterbank), so class content is machine-checkable from band
energies.  A clip carries everything the trainer and the metrics need:
quantized audio, log-mel target, loudness curve, per-frame masks,
unmasked visual features, and the dominant-event tag.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .conditioning import MaskTrack, VideoFeatures, toy_visual_features
from .dsp import (AudioBuffer, MelSpectrogram, dequantize, log_mel,
                  mel_filterbank, mel_to_hz, hz_to_mel, quantize,
                  read_wav, stft_magnitude, write_wav)
from .loudness import LoudnessConfig, LoudnessCurve, loudness_pipeline

ENVELOPES = ("constant", "rise", "fall")
RAMP_SECONDS = 0.010


@dataclass(frozen=True)
class Region:
    top: int
    left: int
    height: int
    width: int


@dataclass(frozen=True)
class Event:
    class_id: int
    onset: float
    duration: float
    gain: float
    region: Region
    envelope: str = "constant"


@dataclass(frozen=True)
class EventScript:
    clip_seconds: float
    events: tuple[Event, ...]

    def validate(self, cfg: ModelConfig) -> None:
        for ev in self.events:
            if not 0 <= ev.class_id < cfg.n_classes:
                raise ValueError("class id out of range")
            if not (0 <= ev.onset and ev.onset + ev.duration <= self.clip_seconds
                    and ev.duration > 0):
                raise ValueError("event outside clip")
            if not 0 < ev.gain <= 1:
                raise ValueError("gain must be in (0, 1]")
            if ev.envelope not in ENVELOPES:
                raise ValueError(f"unknown envelope {ev.envelope!r}")
            r = ev.region
            if (r.top < 0 or r.left < 0 or r.height < 1 or r.width < 1
                    or r.top + r.height > cfg.grid_h or r.left + r.width > cfg.grid_w):
                raise ValueError("region out of bounds")

    def to_json(self) -> dict:
        return {"clip_seconds": self.clip_seconds,
                "events": [asdict(ev) for ev in self.events]}

    @classmethod
    def from_json(cls, d: dict) -> "EventScript":
        events = tuple(
            Event(class_id=int(e["class_id"]), onset=float(e["onset"]),
                  duration=float(e["duration"]), gain=float(e["gain"]),
                  region=Region(**e["region"]), envelope=e.get("envelope", "constant"))
            for e in d["events"])
        return cls(clip_seconds=float(d["clip_seconds"]), events=events)


@dataclass
class PairedExample:
    audio: AudioBuffer
    spec: MelSpectrogram
    curve: LoudnessCurve
    masks: MaskTrack
    features: VideoFeatures
    tag: int
    script: EventScript


def class_fundamentals(cfg: ModelConfig) -> np.ndarray:
    """Tone fundamentals placed on evenly spread mel-filter centers."""
    edges_mel = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    centers = mel_to_hz(edges_mel[1:-1])
    peaks = class_peak_bins(cfg)
    return np.array([centers[p] for p in peaks])


def class_peak_bins(cfg: ModelConfig) -> list[int]:
    return [int((k + 0.5) * cfg.n_mels / cfg.n_classes) for k in range(cfg.n_classes)]


def class_bands(cfg: ModelConfig) -> list[np.ndarray]:
    """Disjoint mel-bin ranges centered on each class's peak filter."""
    bands = []
    for p in class_peak_bins(cfg):
        lo, hi = max(0, p - 1), min(cfg.n_mels, p + 2)
        bands.append(np.arange(lo, hi))
    return bands


CANONICAL_QUADRANTS = ((0, 0), (0, 1), (1, 0), (1, 1))  # (row, col) per class


def canonical_region(class_id: int, cfg: ModelConfig) -> Region:
    qh, qw = cfg.grid_h // 2, cfg.grid_w // 2
    row, col = CANONICAL_QUADRANTS[class_id % 4]
    return Region(top=row * qh, left=col * qw, height=qh, width=qw)


def sample_script(rng: np.random.Generator, cfg: ModelConfig,
                  n_events: tuple[int, int] = (1, 3)) -> EventScript:
    """Draw a random script: uniform classes, onsets, gains and envelopes;
    regions jittered around each class's canonical quadrant."""
    count = int(rng.integers(n_events[0], n_events[1] + 1))
    events = []
    for _ in range(count):
        class_id = int(rng.integers(0, cfg.n_classes))
        duration = float(rng.uniform(0.4, min(1.2, cfg.clip_seconds)))
        onset = float(rng.uniform(0.0, cfg.clip_seconds - duration))
        gain = float(rng.uniform(0.25, 1.0))
        envelope = ENVELOPES[int(rng.integers(0, len(ENVELOPES)))]
        base = canonical_region(class_id, cfg)
        jt = int(rng.integers(-2, 3))
        jl = int(rng.integers(-2, 3))
        height = int(rng.integers(4, base.height + 1))
        width = int(rng.integers(4, base.width + 1))
        top = min(max(base.top + jt, 0), cfg.grid_h - height)
        left = min(max(base.left + jl, 0), cfg.grid_w - width)
        events.append(Event(class_id, onset, duration, gain,
                            Region(top, left, height, width), envelope))
    script = EventScript(cfg.clip_seconds, tuple(events))
    script.validate(cfg)
    return script


def render_audio(script: EventScript, cfg: ModelConfig) -> AudioBuffer:
    """Sum of per-event sines with linear envelopes and 10 ms cosine ramps."""
    n = int(round(script.clip_seconds * cfg.sample_rate))
    t = np.arange(n) / cfg.sample_rate
    out = np.zeros(n)
    freqs = class_fundamentals(cfg)
    for ev in script.events:
        i0 = int(round(ev.onset * cfg.sample_rate))
        i1 = int(round((ev.onset + ev.duration) * cfg.sample_rate))
        i1 = min(i1, n)
        seg_t = t[i0:i1]
        rel = (seg_t - ev.onset) / ev.duration
        if ev.envelope == "rise":
            env = rel
        elif ev.envelope == "fall":
            env = 1.0 - rel
        else:
            env = np.ones_like(rel)
        ramp = np.ones_like(rel)
        n_ramp = min(int(RAMP_SECONDS * cfg.sample_rate), (i1 - i0) // 2)
        if n_ramp > 0:
            shape = 0.5 * (1.0 - np.cos(np.pi * np.arange(n_ramp) / n_ramp))
            ramp[:n_ramp] = shape
            ramp[-n_ramp:] = shape[::-1]
        out[i0:i1] += ev.gain * env * ramp * np.sin(2 * np.pi * freqs[ev.class_id] * seg_t)
    return AudioBuffer(np.clip(out, -1.0, 1.0), sample_rate=cfg.sample_rate)


def masks_from_script(script: EventScript, cfg: ModelConfig) -> MaskTrack:
    """Per-frame union of the regions of events active in that frame."""
    t_f = cfg.n_frames_video
    frames = np.zeros((t_f, cfg.grid_h, cfg.grid_w), dtype=np.uint8)
    frame_dur = script.clip_seconds / t_f
    for ev in script.events:
        for ti in range(t_f):
            if ev.onset < (ti + 1) * frame_dur and ev.onset + ev.duration > ti * frame_dur:
                r = ev.region
                frames[ti, r.top:r.top + r.height, r.left:r.left + r.width] = 1
    return MaskTrack(frames)


def dominant_tag(script: EventScript) -> int:
    best = max(script.events, key=lambda ev: (ev.gain * ev.duration, -ev.class_id))
    return best.class_id


def generate_clip(script: EventScript, cfg: ModelConfig) -> PairedExample:
    """Render and assemble one paired example.

    Audio is passed through 16-bit quantization before the spectrogram
    and curve are computed, so recomputing either from the WAV on disk
    reproduces the stored values bit-exactly.
    """
    script.validate(cfg)
    audio = render_audio(script, cfg)
    audio = AudioBuffer(dequantize(quantize(audio.samples)), cfg.sample_rate)
    fb = mel_filterbank(cfg.n_fft, cfg.n_mels, cfg.sample_rate, cfg.fmin, cfg.fmax)
    spec = log_mel(stft_magnitude(audio, cfg.n_fft, cfg.hop), fb, cfg.log_floor)
    curve = loudness_pipeline(audio, loudness_config(cfg))
    masks = masks_from_script(script, cfg)
    features = toy_visual_features(script, None, cfg)
    return PairedExample(audio=audio, spec=spec, curve=curve, masks=masks,
                         features=features, tag=dominant_tag(script), script=script)


def loudness_config(cfg: ModelConfig) -> LoudnessConfig:
    return LoudnessConfig(rms_win=cfg.rms_win, rms_hop=cfg.rms_hop, rate=cfg.curve_rate,
                          smooth_win=cfg.smooth_win, smooth_sigma=cfg.smooth_sigma)


def normalization_stats(examples: list[PairedExample]) -> tuple[float, float]:
    """Scalar mean/std of log-mel values across a split."""
    cells = np.concatenate([ex.spec.values.ravel() for ex in examples])
    return float(cells.mean()), float(cells.std())


def make_dataset(n_clips: int, seed: int, cfg: ModelConfig) -> list[PairedExample]:
    rng = np.random.default_rng(seed)
    return [generate_clip(sample_script(rng, cfg), cfg) for _ in range(n_clips)]


# --- on-disk layout: <dir>/<clip_id>/{audio.wav,script.json,curve.json,mask.json}

def save_dataset(examples: list[PairedExample], out_dir: str | Path,
                 cfg: ModelConfig, seed: int) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = []
    for i, ex in enumerate(examples):
        cid = f"clip{i:05d}"
        d = out / cid
        d.mkdir(exist_ok=True)
        write_wav(ex.audio, d / "audio.wav")
        (d / "script.json").write_text(json.dumps(ex.script.to_json()))
        (d / "curve.json").write_text(json.dumps(ex.curve.to_json()))
        (d / "mask.json").write_text(json.dumps(ex.masks.to_json()))
        ids.append(cid)
    mean, std = normalization_stats(examples)
    manifest = {"clips": ids, "seed": seed,
                "normalization": {"mean": mean, "std": std},
                "config": cfg.to_dict()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest


def load_dataset(in_dir: str | Path, cfg: ModelConfig | None = None):
    """Load a saved split; returns (examples, manifest)."""
    root = Path(in_dir)
    manifest = json.loads((root / "manifest.json").read_text())
    cfg = cfg or ModelConfig.from_dict(manifest["config"])
    fb = mel_filterbank(cfg.n_fft, cfg.n_mels, cfg.sample_rate, cfg.fmin, cfg.fmax)
    examples = []
    for cid in manifest["clips"]:
        d = root / cid
        audio = read_wav(d / "audio.wav")
        script = EventScript.from_json(json.loads((d / "script.json").read_text()))
        curve = LoudnessCurve.from_json(json.loads((d / "curve.json").read_text()))
        masks = MaskTrack.from_json(json.loads((d / "mask.json").read_text()),
                                    cfg.n_frames_video, cfg.grid_h, cfg.grid_w)
        spec = log_mel(stft_magnitude(audio, cfg.n_fft, cfg.hop), fb, cfg.log_floor)
        features = toy_visual_features(script, None, cfg)
        examples.append(PairedExample(audio=audio, spec=spec, curve=curve, masks=masks,
                                      features=features, tag=dominant_tag(script),
                                      script=script))
    return examples, manifest
