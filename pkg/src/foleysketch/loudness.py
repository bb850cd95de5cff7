"""Loudness-curve production: frame RMS -> adaptive pooling -> Gaussian smoothing.

Turns a waveform into a low-rate, hand-drawable envelope.  The three
stages are exposed individually and composed by `loudness_pipeline`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dsp import AudioBuffer


@dataclass
class RmsEnergy:
    values: np.ndarray
    window: int
    hop: int


@dataclass
class LoudnessCurve:
    """Nonnegative envelope at a fixed number of values per second."""

    values: np.ndarray
    rate: float = 10.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("curve must be 1-D")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("curve contains non-finite values")
        if np.any(self.values < 0):
            raise ValueError("curve values must be >= 0")

    def __len__(self) -> int:
        return len(self.values)

    def to_json(self) -> dict:
        return {"rate": self.rate, "values": [float(v) for v in self.values]}

    @classmethod
    def from_json(cls, d: dict) -> "LoudnessCurve":
        if not isinstance(d, dict) or "values" not in d:
            raise ValueError("curve JSON must be an object with 'values'")
        return cls(np.asarray(d["values"], dtype=np.float64),
                   rate=float(d.get("rate", 10.0)))


@dataclass(frozen=True)
class LoudnessConfig:
    rms_win: int = 1024
    rms_hop: int = 160
    rate: float = 10.0
    smooth_win: int = 3
    smooth_sigma: float = 3.5


def rms_energy(audio: AudioBuffer, n_win: int, n_hop: int) -> RmsEnergy:
    """Per-frame RMS amplitude, tail zero-padded so the last window is full."""
    if n_win < 1 or n_hop < 1:
        raise ValueError("window and hop must be >= 1")
    x = audio.samples
    if len(x) < n_win:
        raise ValueError("window exceeds signal")
    n_frames = math.ceil((len(x) - n_win) / n_hop) + 1
    padded_len = n_win + (n_frames - 1) * n_hop
    if padded_len > len(x):
        x = np.pad(x, (0, padded_len - len(x)))
    idx = np.arange(n_win)[None, :] + n_hop * np.arange(n_frames)[:, None]
    values = np.sqrt(np.mean(x[idx] ** 2, axis=1))
    return RmsEnergy(values, window=n_win, hop=n_hop)


def adaptive_average_pool(values, out_len: int) -> np.ndarray:
    """Segment means; segment k covers [floor(k*L/out), floor((k+1)*L/out))."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if out_len == 0:
        raise ValueError("empty output")
    if not 1 <= out_len <= n:
        raise ValueError("out_len must be in [1, len(values)]")
    bounds = (np.arange(out_len + 1) * n) // out_len
    return np.array([values[bounds[k]:bounds[k + 1]].mean() for k in range(out_len)])


def gaussian_kernel(n_win: int, sigma: float) -> np.ndarray:
    """Normalized Gaussian taps exp(-i^2/(2 sigma^2)) for i in -h..h."""
    if n_win % 2 == 0:
        raise ValueError("window must be odd")
    if sigma <= 0:
        raise ValueError("invalid sigma")
    h = n_win // 2
    i = np.arange(-h, h + 1, dtype=np.float64)
    w = np.exp(-(i ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


def ewma_smooth(values, n_win: int, sigma: float, rate: float = 10.0) -> LoudnessCurve:
    """Symmetric normalized-Gaussian smoothing with replicated edges."""
    values = np.asarray(values, dtype=np.float64)
    kernel = gaussian_kernel(n_win, sigma)
    h = n_win // 2
    padded = np.pad(values, (h, h), mode="edge")
    smoothed = np.convolve(padded, kernel, mode="valid")
    return LoudnessCurve(smoothed, rate=rate)


def loudness_pipeline(audio: AudioBuffer, cfg: LoudnessConfig = LoudnessConfig()) -> LoudnessCurve:
    """RMS energy -> adaptive pooling to rate values/s -> Gaussian smoothing."""
    if len(audio) == 0:
        raise ValueError("empty audio")
    out_len = math.ceil(audio.duration * cfg.rate)
    rms = rms_energy(audio, cfg.rms_win, cfg.rms_hop)
    pooled = adaptive_average_pool(rms.values, out_len)
    return ewma_smooth(pooled, cfg.smooth_win, cfg.smooth_sigma, rate=cfg.rate)
