"""Condition construction: toy visual features, mask fusion, encoders, nulls.

The visual featurizer is a deterministic stand-in for a pretrained video
encoder: each video frame becomes one C-dim token holding per-class
activity (scaled by mask overlap) plus a positional channel in the last
slot.  Masked and unmasked features are fused by a channel-weighted
block; text tags and loudness curves are embedded by trainable tables /
MLPs whose parameters live with the denoiser so gradients reach them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np

if TYPE_CHECKING:
    from .config import ModelConfig
    from .synthdata import EventScript


@dataclass
class MaskTrack:
    """Per-frame binary masks over the H x W cell grid, shape (T_f, H, W)."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 3:
            raise ValueError("mask track must be 3-D (frames, H, W)")
        if not np.isin(self.frames, (0, 1)).all():
            raise ValueError("mask entries must be 0 or 1")
        self.frames = self.frames.astype(np.uint8)

    def to_json(self) -> dict:
        return {"frames": [{"t": t, "cells": self.frames[t].tolist()}
                           for t in range(self.frames.shape[0])]}

    @classmethod
    def from_json(cls, d: dict, n_frames: int, h: int, w: int) -> "MaskTrack":
        """Parse {"frames":[{"t":int,"cells":[[0/1,...],...]},...]}.

        Omitted frames default to all-ones.
        """
        frames = np.ones((n_frames, h, w), dtype=np.uint8)
        for entry in d.get("frames", []):
            t = int(entry["t"])
            if not 0 <= t < n_frames:
                raise ValueError(f"mask frame index {t} out of range")
            cells = np.asarray(entry["cells"])
            if cells.shape != (h, w):
                raise ValueError(f"mask frame {t} must be {h}x{w}")
            frames[t] = cells
        return cls(frames)


@dataclass
class VideoFeatures:
    """One token per video frame, shape (T_f, C)."""

    tokens: np.ndarray

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.float64)
        if self.tokens.ndim != 2:
            raise ValueError("video features must be 2-D (frames, channels)")


@dataclass(frozen=True, eq=False)
class VisualCondition:
    """Unmasked and masked feature pair; fused inside the denoiser so the
    fusion weight stays on the gradient tape."""

    f_visual: np.ndarray  # (T_f, C)
    f_mask: np.ndarray    # (T_f, C)


@dataclass(frozen=True, eq=False)
class ConditionSet:
    """The instruction triple; None marks a null slot.

    `text` is a vocabulary id (embedded inside the denoiser), `signal`
    the raw loudness-curve values.  The classifier-free-guidance
    branches are derived views: the signal, when present, rides along in
    all of them.
    """

    text: Optional[int] = None
    visual: Optional[VisualCondition] = None
    signal: Optional[np.ndarray] = None

    def all_null(self) -> "ConditionSet":
        return ConditionSet(None, None, self.signal)

    def text_only(self) -> "ConditionSet":
        return ConditionSet(self.text, None, self.signal)


@dataclass
class ConditionParams:
    """Trainable conditioning parameters (views into the denoiser's dict)."""

    text_table: np.ndarray   # (V, C)
    null_text: np.ndarray    # (C,)
    null_visual: np.ndarray  # (C,)
    fusion_w: np.ndarray     # (C, C)
    signal_w1: np.ndarray    # (curve_len, hidden)
    signal_b1: np.ndarray    # (hidden,)
    signal_w2: np.ndarray    # (hidden, latent_width)
    signal_b2: np.ndarray    # (latent_width,)


def toy_visual_features(script: "EventScript", mask: Optional[MaskTrack],
                        cfg: "ModelConfig") -> VideoFeatures:
    """Deterministic per-frame tokens from an event script.

    Token(t) = sum over events active at frame t of
    one_hot(class) * gain * overlap(mask_t, event region), plus
    sin(t / T_f) in the last channel.  A null mask means overlap 1.
    """
    t_f, c = cfg.n_frames_video, cfg.cond_dim
    tokens = np.zeros((t_f, c))
    tokens[:, c - 1] = np.sin(np.arange(t_f) / t_f)
    frame_dur = cfg.clip_seconds / t_f
    for ev in script.events:
        r = ev.region
        if (r.top < 0 or r.left < 0 or r.height < 1 or r.width < 1
                or r.top + r.height > cfg.grid_h or r.left + r.width > cfg.grid_w):
            raise ValueError("region out of bounds")
        for t in range(t_f):
            frame_start, frame_end = t * frame_dur, (t + 1) * frame_dur
            if ev.onset < frame_end and ev.onset + ev.duration > frame_start:
                if mask is None:
                    overlap = 1.0
                else:
                    cells = mask.frames[t, r.top:r.top + r.height, r.left:r.left + r.width]
                    overlap = float(cells.mean())
                tokens[t, ev.class_id] += ev.gain * overlap
    return VideoFeatures(tokens)


def _tokens(x) -> np.ndarray:
    return x.tokens if isinstance(x, VideoFeatures) else np.asarray(x, dtype=np.float64)


def mask_fuse(f_visual, f_mask, fusion_w: np.ndarray) -> np.ndarray:
    """Channel-weighted augmentation:
    F_mask * (GAP(F_mask) @ W) + F_visual, broadcast across frames."""
    fv, fm = _tokens(f_visual), _tokens(f_mask)
    if fv.shape != fm.shape:
        raise ValueError("feature shape mismatch")
    if fusion_w.shape != (fv.shape[1], fv.shape[1]):
        raise ValueError("fusion weight shape mismatch")
    gap = fm.mean(axis=0)              # (C,)
    return fm * (gap @ fusion_w)[None, :] + fv


def cross_attention(queries: np.ndarray, context: np.ndarray,
                    w_q: np.ndarray, w_k: np.ndarray, w_v: np.ndarray) -> np.ndarray:
    """Single-head scaled dot-product attention over the context tokens.

    Accepts (L, d) arrays or batched (B, L, d) arrays.
    """
    q = np.asarray(queries, dtype=np.float64) @ w_q
    k = np.asarray(context, dtype=np.float64) @ w_k
    v = np.asarray(context, dtype=np.float64) @ w_v
    d = q.shape[-1]
    scores = q @ np.swapaxes(k, -1, -2) / np.sqrt(d)
    scores -= scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    return weights @ v


def encode_signal(curve_values, params: ConditionParams) -> np.ndarray:
    """Two-layer MLP (tanh hidden) mapping a curve to tau_signal (1, w, 1)."""
    curve = np.asarray(curve_values, dtype=np.float64)
    if curve.shape != (params.signal_w1.shape[0],):
        raise ValueError("curve length mismatch")
    hidden = np.tanh(curve @ params.signal_w1 + params.signal_b1)
    tau = hidden @ params.signal_w2 + params.signal_b2
    return tau.reshape(1, -1, 1)


def inject_signal(z: np.ndarray, tau_signal: np.ndarray) -> np.ndarray:
    """Add tau (1, w, 1) to the latent (h, w, c), broadcasting over h and c."""
    z = np.asarray(z, dtype=np.float64)
    tau = np.asarray(tau_signal, dtype=np.float64)
    if tau.shape != (1, z.shape[1], 1):
        raise ValueError("width mismatch")
    return z + tau


def encode_text(tag: int, table: np.ndarray) -> np.ndarray:
    """Row lookup in the (V, C) embedding table."""
    if not 0 <= tag < table.shape[0]:
        raise ValueError("unknown tag")
    return table[tag].copy()


def null_condition(params: ConditionParams, slot: str) -> np.ndarray:
    """The learned null token for a CFG slot ('text' or 'visual')."""
    if slot == "text":
        return params.null_text.copy()
    if slot == "visual":
        return params.null_visual.copy()
    raise ValueError(f"unknown slot {slot!r}")
