import numpy as np
import pytest

from foleysketch.dsp import (AudioBuffer, FilterBank, MagnitudeGrid,
                             MelSpectrogram, audio_from_wav_bytes, griffin_lim,
                             hz_to_mel, log_mel, mel_filterbank,
                             mel_to_magnitude, mix_audio, quantize,
                             stft_magnitude, wav_bytes, _hann)

SR = 16000


def _frame_like_stft(x, n_fft, hop):
    pad = n_fft // 2
    xp = np.pad(x, (pad, pad), mode="reflect")
    n = len(x) // hop + 1
    return np.stack([xp[i * hop:i * hop + n_fft] for i in range(n)])


def _dft_oracle(x, n_fft, hop):
    """Direct DFT-sum magnitudes, independent of np.fft."""
    frames = _frame_like_stft(x, n_fft, hop) * _hann(n_fft)
    n = np.arange(n_fft)
    mags = np.zeros((frames.shape[0], n_fft // 2 + 1))
    for k in range(n_fft // 2 + 1):
        basis = np.exp(-2j * np.pi * k * n / n_fft)
        mags[:, k] = np.abs(frames @ basis)
    return mags


class TestStft:
    def test_zero_signal_gives_zero_grid(self):
        audio = AudioBuffer(np.zeros(SR), SR)
        grid = stft_magnitude(audio, 256, 64)
        assert np.all(grid.values == 0.0)
        assert grid.values.shape == (SR // 64 + 1, 129)

    def test_bin_center_sine_matches_dft_oracle(self):
        n_fft, hop, k = 128, 32, 9
        freq = k * SR / n_fft
        t = np.arange(SR // 4) / SR
        x = np.sin(2 * np.pi * freq * t)
        grid = stft_magnitude(AudioBuffer(x, SR), n_fft, hop)
        oracle = _dft_oracle(x, n_fft, hop)
        np.testing.assert_allclose(grid.values, oracle, rtol=1e-6,
                                   atol=1e-9 * oracle.max())
        # away from the edges every frame peaks at bin k
        interior = grid.values[4:-4]
        assert np.all(np.argmax(interior, axis=1) == k)
        peak_rel = np.abs(interior[:, k] - oracle[4:-4, k]) / oracle[4:-4, k]
        assert peak_rel.max() <= 1e-6

    def test_parseval_energy(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, SR)
        n_fft, hop = 256, 64
        grid = stft_magnitude(AudioBuffer(x, SR), n_fft, hop)
        frames = _frame_like_stft(x, n_fft, hop) * _hann(n_fft)
        e_time = np.sum(frames ** 2, axis=1)
        m = grid.values
        e_freq = (m[:, 0] ** 2 + m[:, -1] ** 2 + 2 * np.sum(m[:, 1:-1] ** 2, axis=1)) / n_fft
        assert np.max(np.abs(e_freq - e_time) / np.maximum(e_time, 1e-12)) <= 1e-6

    def test_sign_flip_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(4000)
        a = stft_magnitude(AudioBuffer(x, SR), 256, 128).values
        b = stft_magnitude(AudioBuffer(-x, SR), 256, 128).values
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError, match="input too short"):
            stft_magnitude(AudioBuffer(np.zeros(100), SR), 256, 64)
        with pytest.raises(ValueError, match="invalid hop"):
            stft_magnitude(AudioBuffer(np.zeros(1000), SR), 256, 0)


class TestMelFilterbank:
    def test_mel_scale_formula(self):
        assert hz_to_mel(700.0) == pytest.approx(2595 * np.log10(2), abs=1e-9)
        assert hz_to_mel(0.0) == 0.0

    def test_single_filter_peaks_mid_range(self):
        fb = mel_filterbank(256, 1, SR, 0.0, SR / 2)
        assert fb.weights.shape == (1, 129)
        assert fb.weights.sum() == pytest.approx(1.0, abs=1e-9)
        peak_bin = int(np.argmax(fb.weights[0]))
        bin_freqs = np.arange(129) * SR / 256
        mid_mel_hz = 700 * (10 ** (hz_to_mel(SR / 2) / 2 / 2595) - 1)
        assert abs(bin_freqs[peak_bin] - mid_mel_hz) <= SR / 256

    def test_rows_sum_to_one(self):
        fb = mel_filterbank(1024, 16, SR, 0.0, 8000.0)
        np.testing.assert_allclose(fb.weights.sum(axis=1), 1.0, atol=1e-9)

    def test_centers_strictly_increasing_contiguous_support(self):
        fb = mel_filterbank(1024, 16, SR, 0.0, 8000.0)
        peaks = np.argmax(fb.weights, axis=1)
        assert np.all(np.diff(peaks) > 0)
        for row in fb.weights:
            nz = np.flatnonzero(row)
            assert np.array_equal(nz, np.arange(nz[0], nz[-1] + 1))

    def test_fmax_above_nyquist(self):
        with pytest.raises(ValueError, match="fmax above Nyquist"):
            mel_filterbank(256, 4, SR, 0.0, SR)


class TestLogMel:
    def test_all_zero_magnitudes_hit_floor(self):
        fb = mel_filterbank(256, 8, SR)
        mag = MagnitudeGrid(np.zeros((5, 129)), 256, 64, SR)
        mel = log_mel(mag, fb, 1e-5)
        np.testing.assert_allclose(mel.values, np.log(1e-5))

    def test_doubling_magnitude_adds_ln4(self):
        rng = np.random.default_rng(2)
        fb = mel_filterbank(256, 8, SR)
        vals = rng.uniform(0.5, 2.0, (7, 129))
        a = log_mel(MagnitudeGrid(vals, 256, 64, SR), fb)
        b = log_mel(MagnitudeGrid(2 * vals, 256, 64, SR), fb)
        np.testing.assert_allclose(b.values - a.values, np.log(4.0), atol=1e-9)

    def test_white_noise_matches_matrix_oracle(self):
        rng = np.random.default_rng(3)
        fb = mel_filterbank(256, 8, SR)
        vals = rng.uniform(0, 1, (4, 129))
        mel = log_mel(MagnitudeGrid(vals, 256, 64, SR), fb, 1e-5)
        oracle = np.log(np.maximum((vals ** 2) @ fb.weights.T, 1e-5))
        np.testing.assert_allclose(mel.values, oracle, atol=1e-9)

    def test_monotone_in_magnitude(self):
        rng = np.random.default_rng(4)
        fb = mel_filterbank(256, 8, SR)
        vals = rng.uniform(0, 1, (3, 129))
        base = log_mel(MagnitudeGrid(vals, 256, 64, SR), fb).values
        bumped = vals.copy()
        bumped[1, 40] += 0.5
        after = log_mel(MagnitudeGrid(bumped, 256, 64, SR), fb).values
        assert np.all(after >= base - 1e-12)

    def test_dimension_mismatch(self):
        fb = mel_filterbank(512, 8, SR)
        with pytest.raises(ValueError, match="filterbank/grid mismatch"):
            log_mel(MagnitudeGrid(np.zeros((5, 129)), 256, 64, SR), fb)


class TestMelToMagnitude:
    def test_round_trip_on_smooth_spectra(self):
        fb = mel_filterbank(1024, 16, SR, 0.0, 8000.0)
        # smooth log-mel bumps, comfortably above the floor
        frames = np.arange(6)[:, None]
        bins = np.arange(16)[None, :]
        mel_vals = -2.0 + 1.5 * np.exp(-(bins - 6 - 0.3 * frames) ** 2 / 8.0)
        mel = MelSpectrogram(mel_vals, frame_rate=31.25)
        mag = mel_to_magnitude(mel, fb, 1024, 504, SR)
        back = log_mel(mag, fb, 1e-5)
        assert np.max(np.abs(back.values - mel.values)) <= 0.1

    def test_all_floor_mel_gives_tiny_magnitudes(self):
        # least-norm inversion overshoots the per-bin floor slightly on
        # area-normalized filters, so allow a sqrt(2) factor
        fb = mel_filterbank(1024, 16, SR, 0.0, 8000.0)
        mel = MelSpectrogram(np.full((4, 16), np.log(1e-5)), frame_rate=31.25)
        mag = mel_to_magnitude(mel, fb, 1024, 504, SR)
        assert np.all(mag.values <= np.sqrt(2e-5))

    def test_negative_pinv_output_clamped_to_zero(self):
        fb = FilterBank(np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5]]), 0.0, 8000.0)
        # pinv image of exp(mel)=[1, 0.01] has a negative third component
        mel = MelSpectrogram(np.log([[1.0, 0.01]]), frame_rate=1.0)
        mag = mel_to_magnitude(mel, fb, 4, 1, SR)
        pinv = np.linalg.pinv(fb.weights)
        raw = pinv @ np.array([1.0, 0.01])
        assert raw.min() < 0
        assert mag.values[0, np.argmin(raw)] == 0.0


class TestGriffinLim:
    def test_zero_magnitude_gives_zero_audio(self):
        mag = MagnitudeGrid(np.zeros((10, 129)), 256, 64, SR)
        audio = griffin_lim(mag, iterations=4, seed=3)
        np.testing.assert_allclose(audio.samples, 0.0, atol=1e-15)

    def test_same_seed_bitwise_identical(self):
        rng = np.random.default_rng(5)
        mag = MagnitudeGrid(rng.uniform(0, 1, (20, 129)), 256, 64, SR)
        a = griffin_lim(mag, iterations=8, seed=11)
        b = griffin_lim(mag, iterations=8, seed=11)
        assert np.array_equal(a.samples, b.samples)

    def test_error_decreases_on_recording_like_signal(self):
        # a "recording": two tones plus noise bursts
        t = np.arange(SR) / SR
        x = 0.4 * np.sin(2 * np.pi * 440 * t) + 0.2 * np.sin(2 * np.pi * 1320 * t)
        x[SR // 2:] *= 0.2
        x += 0.05 * np.random.default_rng(6).standard_normal(SR)
        mag = stft_magnitude(AudioBuffer(x, SR), 512, 128)
        audio, errors = griffin_lim(mag, iterations=32, seed=0, with_errors=True)
        assert errors[32] < errors[0]
        # recompute the final error independently
        final = stft_magnitude(audio, 512, 128)
        e32 = np.linalg.norm(final.values - mag.values) / np.linalg.norm(mag.values)
        assert e32 == pytest.approx(errors[32], rel=1e-9)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_error_sequence_non_increasing(self, seed):
        rng = np.random.default_rng(seed + 40)
        t = np.arange(4000) / SR
        x = rng.uniform(0.2, 1.0) * np.sin(2 * np.pi * rng.uniform(100, 3000) * t)
        x *= np.linspace(0, 1, len(t))
        mag = stft_magnitude(AudioBuffer(x, SR), 256, 64)
        _, errors = griffin_lim(mag, iterations=16, seed=seed, with_errors=True)
        assert np.all(np.diff(errors) <= 1e-10)


class TestMixAudio:
    def test_identity(self):
        x = AudioBuffer(np.linspace(-0.5, 0.5, 100), SR)
        np.testing.assert_array_equal(mix_audio([x]).samples, x.samples)

    def test_cancellation(self):
        x = np.sin(np.linspace(0, 20, 500)) * 0.7
        mixed = mix_audio([AudioBuffer(x, SR), AudioBuffer(-x, SR)])
        np.testing.assert_allclose(mixed.samples, 0.0, atol=1e-15)

    def test_clipping(self):
        a = AudioBuffer(np.full(64, 0.8), SR)
        mixed = mix_audio([a, a])
        np.testing.assert_array_equal(mixed.samples, 1.0)

    def test_zero_padding_shorter_clip(self):
        a = AudioBuffer(np.ones(10) * 0.25, SR)
        b = AudioBuffer(np.ones(4) * 0.25, SR)
        mixed = mix_audio([a, b])
        assert len(mixed) == 10
        np.testing.assert_allclose(mixed.samples[:4], 0.5)
        np.testing.assert_allclose(mixed.samples[4:], 0.25)

    def test_commutative_associative_non_clipping(self):
        rng = np.random.default_rng(7)
        clips = [AudioBuffer(rng.uniform(-0.2, 0.2, 128), SR) for _ in range(3)]
        a, b, c = clips
        m1 = mix_audio([a, b, c]).samples
        m2 = mix_audio([c, a, b]).samples
        m3 = mix_audio([mix_audio([a, b]), c]).samples
        np.testing.assert_allclose(m1, m2, atol=1e-12)
        np.testing.assert_allclose(m1, m3, atol=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError, match="no clips"):
            mix_audio([])
        with pytest.raises(ValueError, match="sample-rate mismatch"):
            mix_audio([AudioBuffer(np.zeros(4), 16000), AudioBuffer(np.zeros(4), 8000)])


class TestWav:
    def test_round_trip_is_lossless_after_quantization(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(-1, 1, 1000)
        buf = AudioBuffer(quantize(x) / 32767.0, SR)
        back = audio_from_wav_bytes(wav_bytes(buf))
        assert back.sample_rate == SR
        np.testing.assert_array_equal(back.samples, buf.samples)

    def test_conversion_rule(self):
        buf = AudioBuffer(np.array([0.0, 1.0, -1.0, 0.5, 2.0, -2.0]), SR)
        pcm = quantize(buf.samples)
        assert list(pcm) == [0, 32767, -32767, 16384, 32767, -32767]
