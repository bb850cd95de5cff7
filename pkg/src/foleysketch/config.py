"""Model and pipeline configuration shared by every stage."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class ModelConfig:
    """Desk-scale defaults for the whole generation stack.

    The latent is the normalized log-mel grid itself, shaped
    (n_mels, n_frames, 1).  hop=504 makes a 2 s clip at 16 kHz come out
    at exactly 64 frames (floor(32000/504)+1).
    """

    # audio / spectrogram
    sample_rate: int = 16000
    clip_seconds: float = 2.0
    n_fft: int = 1024
    hop: int = 504
    n_mels: int = 16
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-5
    griffin_lim_iters: int = 32

    # loudness curve
    curve_rate: float = 10.0
    rms_win: int = 1024
    rms_hop: int = 160
    smooth_win: int = 3
    smooth_sigma: float = 3.5

    # event grammar / "video" side
    n_classes: int = 4
    grid_h: int = 16
    grid_w: int = 16
    n_frames_video: int = 8   # T_f at 4 frames/s over 2 s
    cond_dim: int = 32        # C, width of text/visual tokens

    # diffusion
    timesteps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02
    ddim_steps: int = 25
    s_text: float = 3.5
    s_video: float = 4.5

    # denoiser
    base_channels: int = 16
    time_dim: int = 32
    attn_dim: int = 32
    signal_hidden: int = 64

    @property
    def n_samples(self) -> int:
        return int(round(self.clip_seconds * self.sample_rate))

    @property
    def n_spec_frames(self) -> int:
        """T': STFT frame count for a full clip (also the latent width)."""
        return self.n_samples // self.hop + 1

    @property
    def curve_len(self) -> int:
        return math.ceil(self.clip_seconds * self.curve_rate)

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        return (self.n_mels, self.n_spec_frames, 1)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


CLASS_NAMES = ("low", "mid", "high", "top")


def class_id_from_tag(tag: str | int, n_classes: int = 4) -> int:
    """Resolve a class name or numeric id to a class id."""
    if isinstance(tag, int):
        cid = tag
    elif tag.lstrip("-").isdigit():
        cid = int(tag)
    else:
        try:
            cid = CLASS_NAMES.index(tag)
        except ValueError:
            raise ValueError(f"unknown tag {tag!r}") from None
    if not 0 <= cid < n_classes:
        raise ValueError(f"unknown tag {tag!r}")
    return cid


def load_config(path: str | Path | None, **overrides) -> ModelConfig:
    """Load a config JSON file and apply keyword overrides (None skipped)."""
    d = {}
    if path is not None:
        d = json.loads(Path(path).read_text())
    d.update({k: v for k, v in overrides.items() if v is not None})
    return ModelConfig.from_dict(d)
