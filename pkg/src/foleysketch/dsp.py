"""Waveform <-> spectrogram transforms.

STFT magnitude, mel filterbank, log-mel, approximate inversion via
filterbank pseudo-inverse plus Griffin-Lim, additive mixing, and 16-bit
mono WAV I/O.  Everything is plain numpy on float64 and pure given its
inputs; seeded randomness (Griffin-Lim phase init) is confined to a
generator built from the caller's seed.
"""

from __future__ import annotations

import io
import wave
from dataclasses import dataclass

import numpy as np

MEL_SCALE_CONSTANT = 2595.0
MEL_BREAK_HZ = 700.0


@dataclass
class AudioBuffer:
    """Mono waveform, nominal range [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("audio must be mono (1-D)")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("invalid sample rate")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class MagnitudeGrid:
    """Per-frame DFT magnitudes, shape (frames, n_fft//2 + 1)."""

    values: np.ndarray
    n_fft: int
    hop: int
    sample_rate: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != self.n_fft // 2 + 1:
            raise ValueError("magnitude grid must have n_fft//2+1 bins")


@dataclass
class FilterBank:
    """Triangular mel filters, rows normalized to sum to 1."""

    weights: np.ndarray  # (n_mels, bins)
    fmin: float
    fmax: float
    mel_scale_constant: float = MEL_SCALE_CONSTANT

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]


@dataclass
class MelSpectrogram:
    """Log-mel grid, shape (frames, n_mels)."""

    values: np.ndarray
    frame_rate: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("mel spectrogram must be 2-D (frames, mels)")


def hz_to_mel(f):
    return MEL_SCALE_CONSTANT * np.log10(1.0 + np.asarray(f, dtype=np.float64) / MEL_BREAK_HZ)


def mel_to_hz(m):
    return MEL_BREAK_HZ * (10.0 ** (np.asarray(m, dtype=np.float64) / MEL_SCALE_CONSTANT) - 1.0)


def _hann(n_fft: int) -> np.ndarray:
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n_fft) / n_fft)


def _frame_signal(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """Center-padded (reflection) frames; count = floor(len(x)/hop) + 1."""
    pad = n_fft // 2
    xp = np.pad(x, (pad, pad), mode="reflect")
    n_frames = len(x) // hop + 1
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    return xp[idx]


def _stft_complex(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    frames = _frame_signal(x, n_fft, hop) * _hann(n_fft)[None, :]
    return np.fft.rfft(frames, axis=1)


def _istft(spec: np.ndarray, n_fft: int, hop: int, length: int) -> np.ndarray:
    """Least-squares inverse of _stft_complex for a target signal length."""
    window = _hann(n_fft)
    frames = np.fft.irfft(spec, n=n_fft, axis=1) * window[None, :]
    padded_len = length + n_fft
    out = np.zeros(padded_len)
    norm = np.zeros(padded_len)
    wsq = window ** 2
    for i in range(frames.shape[0]):
        start = i * hop
        out[start:start + n_fft] += frames[i]
        norm[start:start + n_fft] += wsq
    out = out / np.maximum(norm, 1e-12)
    pad = n_fft // 2
    return out[pad:pad + length]


def stft_magnitude(audio: AudioBuffer, n_fft: int, hop: int) -> MagnitudeGrid:
    """Hann-windowed STFT magnitude with reflection-centered frames."""
    if hop <= 0:
        raise ValueError("invalid hop")
    if n_fft <= 0 or n_fft % 2 != 0:
        raise ValueError("n_fft must be a positive even number")
    if len(audio) < n_fft:
        raise ValueError("input too short")
    mag = np.abs(_stft_complex(audio.samples, n_fft, hop))
    return MagnitudeGrid(mag, n_fft=n_fft, hop=hop, sample_rate=audio.sample_rate)


def mel_filterbank(n_fft: int, n_mels: int, sample_rate: int,
                   fmin: float = 0.0, fmax: float | None = None) -> FilterBank:
    """Triangular filters with edges equally spaced on the mel scale.

    Each filter is normalized so its weights sum to 1 over FFT bins.
    """
    nyquist = sample_rate / 2.0
    if fmax is None:
        fmax = nyquist
    if fmax > nyquist:
        raise ValueError("fmax above Nyquist")
    if not 0 <= fmin < fmax:
        raise ValueError("need 0 <= fmin < fmax")
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")

    edges_mel = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    edges_hz = mel_to_hz(edges_mel)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft

    weights = np.zeros((n_mels, len(bin_freqs)))
    for m in range(n_mels):
        lo, center, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        tri = np.maximum(0.0, np.minimum(rising, falling))
        total = tri.sum()
        if total <= 0:
            raise ValueError(f"mel filter {m} has empty support; increase n_fft")
        weights[m] = tri / total
    return FilterBank(weights, fmin=float(fmin), fmax=float(fmax))


def log_mel(mag: MagnitudeGrid, fb: FilterBank, floor_epsilon: float = 1e-5) -> MelSpectrogram:
    """ln(max(filterbank . power, floor)); power is magnitude squared."""
    if floor_epsilon <= 0:
        raise ValueError("floor_epsilon must be > 0")
    if fb.weights.shape[1] != mag.values.shape[1]:
        raise ValueError("filterbank/grid mismatch")
    power = mag.values ** 2
    mel_power = power @ fb.weights.T
    values = np.log(np.maximum(mel_power, floor_epsilon))
    frame_rate = mag.sample_rate / mag.hop
    return MelSpectrogram(values, frame_rate=frame_rate)


def mel_to_magnitude(mel: MelSpectrogram, fb: FilterBank, n_fft: int, hop: int,
                     sample_rate: int) -> MagnitudeGrid:
    """Approximate inversion: pseudo-inverse of the filterbank, clamped at 0.

    Log-mel values are capped at 30 before exponentiation so wildly
    out-of-range inputs (an untrained model's latents) stay finite.
    """
    if mel.values.shape[1] != fb.n_mels:
        raise ValueError("filterbank/grid mismatch")
    pinv = np.linalg.pinv(fb.weights)  # (bins, n_mels)
    power = np.exp(np.minimum(mel.values, 30.0)) @ pinv.T
    power = np.maximum(power, 0.0)
    return MagnitudeGrid(np.sqrt(power), n_fft=n_fft, hop=hop, sample_rate=sample_rate)


def griffin_lim(mag: MagnitudeGrid, iterations: int = 32, seed: int = 0,
                with_errors: bool = False):
    """Alternating-projection phase reconstruction from an STFT magnitude.

    Starts from uniformly random phase drawn from a generator seeded with
    `seed`, so output is bit-deterministic for a fixed seed.  When
    `with_errors` is set, also returns the spectral-convergence error
    after each synthesis, E_i = ||(|STFT(x_i)}| - mag||_F / ||mag||_F.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    n_frames = mag.values.shape[0]
    if n_frames < 2:
        raise ValueError("need at least 2 frames")
    length = (n_frames - 1) * mag.hop
    rng = np.random.default_rng(seed)
    phase = np.exp(1j * rng.uniform(-np.pi, np.pi, size=mag.values.shape))
    mag_norm = np.linalg.norm(mag.values)

    def spectral_error(spec):
        if mag_norm == 0:
            return 0.0
        return float(np.linalg.norm(np.abs(spec) - mag.values) / mag_norm)

    errors = []
    x = _istft(mag.values * phase, mag.n_fft, mag.hop, length)
    for _ in range(iterations):
        spec = _stft_complex(x, mag.n_fft, mag.hop)
        errors.append(spectral_error(spec))
        absspec = np.abs(spec)
        phase = np.where(absspec > 0, spec / np.maximum(absspec, 1e-300), 1.0)
        x = _istft(mag.values * phase, mag.n_fft, mag.hop, length)

    audio = AudioBuffer(x, sample_rate=mag.sample_rate)
    if with_errors:
        errors.append(spectral_error(_stft_complex(x, mag.n_fft, mag.hop)))
        return audio, np.asarray(errors)
    return audio


def mix_audio(clips: list[AudioBuffer]) -> AudioBuffer:
    """Sample-wise sum, shorter clips zero-padded, hard-clipped to [-1, 1]."""
    if not clips:
        raise ValueError("no clips")
    rates = {c.sample_rate for c in clips}
    if len(rates) > 1:
        raise ValueError("sample-rate mismatch")
    n = max(len(c) for c in clips)
    total = np.zeros(n)
    for c in clips:
        total[:len(c)] += c.samples
    return AudioBuffer(np.clip(total, -1.0, 1.0), sample_rate=clips[0].sample_rate)


# --- WAV I/O: RIFF/WAVE, PCM signed 16-bit little-endian, mono ------------

def quantize(samples: np.ndarray) -> np.ndarray:
    """float [-1,1] -> int16 via round(clamp(x)*32767)."""
    return np.rint(np.clip(samples, -1.0, 1.0) * 32767.0).astype(np.int16)


def dequantize(pcm: np.ndarray) -> np.ndarray:
    return pcm.astype(np.float64) / 32767.0


def wav_bytes(audio: AudioBuffer) -> bytes:
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(audio.sample_rate)
        w.writeframes(quantize(audio.samples).tobytes())
    return buf.getvalue()


def audio_from_wav_bytes(data: bytes) -> AudioBuffer:
    with wave.open(io.BytesIO(data), "rb") as w:
        if w.getnchannels() != 1:
            raise ValueError("WAV must be mono")
        if w.getsampwidth() != 2:
            raise ValueError("WAV must be 16-bit PCM")
        pcm = np.frombuffer(w.readframes(w.getnframes()), dtype="<i2")
        return AudioBuffer(dequantize(pcm), sample_rate=w.getframerate())


def write_wav(audio: AudioBuffer, path) -> None:
    with open(path, "wb") as f:
        f.write(wav_bytes(audio))


def read_wav(path) -> AudioBuffer:
    with open(path, "rb") as f:
        return audio_from_wav_bytes(f.read())
