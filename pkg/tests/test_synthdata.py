import json

import numpy as np
import pytest

from foleysketch.config import ModelConfig
from foleysketch.dsp import AudioBuffer, log_mel, mel_filterbank, stft_magnitude
from foleysketch.loudness import rms_energy
from foleysketch.metrics import band_energy_classify
from foleysketch.synthdata import (Event, EventScript, Region, class_bands,
                                   class_fundamentals, generate_clip,
                                   load_dataset, make_dataset,
                                   normalization_stats, render_audio,
                                   sample_script, save_dataset)

CFG = ModelConfig()


def _single_event_script(class_id=1, gain=0.8, envelope="constant",
                         onset=0.2, duration=1.5):
    return EventScript(CFG.clip_seconds, (Event(
        class_id, onset, duration, gain, Region(0, 0, 8, 8), envelope),))


class TestSampleScript:
    def test_deterministic_given_seed(self):
        a = sample_script(np.random.default_rng(7), CFG)
        b = sample_script(np.random.default_rng(7), CFG)
        assert a == b

    def test_class_frequencies_uniform(self):
        rng = np.random.default_rng(8)
        counts = np.zeros(4)
        total = 0
        for _ in range(4000):
            for ev in sample_script(rng, CFG).events:
                counts[ev.class_id] += 1
                total += 1
        freqs = counts / total
        assert total >= 10_000 or total >= 4000  # 1-3 events per clip
        assert np.all(freqs >= 0.22) and np.all(freqs <= 0.28)

    def test_all_scripts_valid(self):
        rng = np.random.default_rng(9)
        for _ in range(300):
            script = sample_script(rng, CFG)
            script.validate(CFG)  # raises on violation
            assert 1 <= len(script.events) <= 3


class TestRenderAudio:
    def test_empty_script_is_silence(self):
        audio = render_audio(EventScript(CFG.clip_seconds, ()), CFG)
        assert len(audio) == CFG.n_samples
        np.testing.assert_array_equal(audio.samples, 0.0)

    def test_plateau_rms_matches_sine_identity(self):
        gain = 0.6
        script = _single_event_script(gain=gain, onset=0.2, duration=1.5)
        audio = render_audio(script, CFG)
        # interior of the event, away from the 10 ms ramps
        i0 = int(0.3 * CFG.sample_rate)
        i1 = int(1.6 * CFG.sample_rate)
        rms = rms_energy(AudioBuffer(audio.samples[i0:i1], CFG.sample_rate),
                         1024, 512)
        target = gain / np.sqrt(2)
        # drop the final window, which runs into the zero-padded tail
        assert np.all(np.abs(rms.values[:-1] - target) <= 0.02 * target)

    def test_disjoint_events_render_additively(self):
        e1 = Event(0, 0.1, 0.5, 0.7, Region(0, 0, 4, 4), "constant")
        e2 = Event(2, 1.0, 0.6, 0.5, Region(8, 8, 4, 4), "rise")
        both = render_audio(EventScript(CFG.clip_seconds, (e1, e2)), CFG)
        a = render_audio(EventScript(CFG.clip_seconds, (e1,)), CFG)
        b = render_audio(EventScript(CFG.clip_seconds, (e2,)), CFG)
        np.testing.assert_array_equal(both.samples, a.samples + b.samples)

    def test_clip_length(self):
        audio = render_audio(_single_event_script(), CFG)
        assert len(audio) == int(CFG.clip_seconds * CFG.sample_rate)


class TestGenerateClip:
    def test_curve_recomputes_bit_exactly_from_audio(self):
        from foleysketch.loudness import loudness_pipeline
        from foleysketch.synthdata import loudness_config
        ex = generate_clip(_single_event_script(), CFG)
        again = loudness_pipeline(ex.audio, loudness_config(CFG))
        np.testing.assert_array_equal(again.values, ex.curve.values)

    def test_spec_matches_stft_path(self):
        ex = generate_clip(_single_event_script(), CFG)
        fb = mel_filterbank(CFG.n_fft, CFG.n_mels, CFG.sample_rate, CFG.fmin, CFG.fmax)
        again = log_mel(stft_magnitude(ex.audio, CFG.n_fft, CFG.hop), fb, CFG.log_floor)
        np.testing.assert_array_equal(again.values, ex.spec.values)
        assert ex.spec.values.shape == (CFG.n_spec_frames, CFG.n_mels)

    def test_mask_confined_to_region_and_active_frames(self):
        script = _single_event_script(class_id=1, onset=0.5, duration=0.5)
        ex = generate_clip(script, CFG)
        frames = ex.masks.frames
        active = {2, 3}  # [0.5, 1.0) s at 4 frames/s
        for t in range(CFG.n_frames_video):
            if t in active:
                assert frames[t, 0:8, 0:8].min() == 1
                assert frames[t].sum() == 64
            else:
                assert frames[t].sum() == 0

    def test_rise_envelope_gives_nondecreasing_curve_interior(self):
        script = _single_event_script(envelope="rise", onset=0.0, duration=2.0)
        ex = generate_clip(script, CFG)
        interior = ex.curve.values[1:-1]
        assert np.all(np.diff(interior) >= -1e-9)

    def test_dominant_tag_uses_gain_times_duration(self):
        e1 = Event(0, 0.0, 1.0, 0.5, Region(0, 0, 4, 4), "constant")   # 0.5
        e2 = Event(3, 0.5, 1.5, 0.6, Region(8, 8, 4, 4), "constant")   # 0.9
        ex = generate_clip(EventScript(CFG.clip_seconds, (e1, e2)), CFG)
        assert ex.tag == 3


class TestClassSeparation:
    def test_fundamentals_strictly_increasing_below_nyquist(self):
        freqs = class_fundamentals(CFG)
        assert np.all(np.diff(freqs) > 0)
        assert freqs[-1] < CFG.sample_rate / 2

    def test_bands_disjoint_and_cover_fundamentals(self):
        bands = class_bands(CFG)
        seen = set()
        for band in bands:
            assert len(band) >= 1
            assert not (set(band.tolist()) & seen)
            seen |= set(band.tolist())

    def test_single_event_band_energy_concentration(self):
        rng = np.random.default_rng(10)
        bands = class_bands(CFG)
        ok = 0
        for i in range(100):
            class_id = i % 4
            script = EventScript(CFG.clip_seconds, (Event(
                class_id, 0.1, 1.8, float(rng.uniform(0.4, 1.0)),
                Region(0, 0, 8, 8), "constant"),))
            ex = generate_clip(script, CFG)
            power = np.exp(ex.spec.values)
            frac = power[:, bands[class_id]].sum() / power.sum()
            if frac >= 0.95:
                ok += 1
        assert ok >= 95

    def test_band_classifier_agrees_on_single_event_clips(self):
        bands = class_bands(CFG)
        for class_id in range(4):
            ex = generate_clip(_single_event_script(class_id=class_id), CFG)
            pred, probs = band_energy_classify(ex.spec, bands)
            assert pred == class_id
            assert probs.argmax() == class_id


class TestDatasetIo:
    def test_normalization_stats_reproducible(self):
        examples = make_dataset(12, seed=3, cfg=CFG)
        m1, s1 = normalization_stats(examples)
        m2, s2 = normalization_stats(examples)
        assert abs(m1 - m2) <= 1e-6 and abs(s1 - s2) <= 1e-6

    def test_save_load_round_trip(self, tmp_path):
        examples = make_dataset(6, seed=4, cfg=CFG)
        manifest = save_dataset(examples, tmp_path / "d", CFG, seed=4)
        assert len(manifest["clips"]) == 6
        loaded, manifest2 = load_dataset(tmp_path / "d")
        assert manifest2["normalization"] == manifest["normalization"]
        for ex, lx in zip(examples, loaded):
            np.testing.assert_array_equal(ex.audio.samples, lx.audio.samples)
            np.testing.assert_array_equal(ex.spec.values, lx.spec.values)
            np.testing.assert_array_equal(ex.curve.values, lx.curve.values)
            np.testing.assert_array_equal(ex.masks.frames, lx.masks.frames)
            assert ex.tag == lx.tag
            assert ex.script == lx.script

    def test_rerun_with_same_seed_is_byte_identical(self, tmp_path):
        for d in ("a", "b"):
            save_dataset(make_dataset(4, seed=9, cfg=CFG), tmp_path / d, CFG, seed=9)
        for rel in sorted(p.relative_to(tmp_path / "a")
                          for p in (tmp_path / "a").rglob("*") if p.is_file()):
            assert (tmp_path / "a" / rel).read_bytes() == \
                (tmp_path / "b" / rel).read_bytes()

    def test_script_json_round_trip(self):
        script = _single_event_script(class_id=3, envelope="fall")
        again = EventScript.from_json(json.loads(json.dumps(script.to_json())))
        assert again == script


class TestScriptValidation:
    @pytest.mark.parametrize("event,msg", [
        (Event(9, 0, 1, 0.5, Region(0, 0, 4, 4)), "class id"),
        (Event(0, 1.5, 1.0, 0.5, Region(0, 0, 4, 4)), "outside clip"),
        (Event(0, 0, 1, 0.0, Region(0, 0, 4, 4)), "gain"),
        (Event(0, 0, 1, 0.5, Region(0, 0, 20, 4)), "region out of bounds"),
        (Event(0, 0, 1, 0.5, Region(0, 0, 4, 4), "wiggle"), "envelope"),
    ])
    def test_invalid_scripts_rejected(self, event, msg):
        with pytest.raises(ValueError, match=msg):
            EventScript(CFG.clip_seconds, (event,)).validate(CFG)
