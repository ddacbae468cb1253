"""Audio core: convolution against a direct oracle, level meters, WAV I/O."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hakws.audio import (
    SILENCE_DB,
    AudioBuffer,
    active_mask,
    active_speech_level,
    convolve,
    read_wav,
    rms_level_db,
    write_wav,
)


def direct_convolve(x, h):
    """O(N*M) textbook convolution; the oracle the fast path must match."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    out = np.zeros(x.size + h.size - 1)
    for k in range(h.size):
        out[k:k + x.size] += h[k] * x
    return out


def buf(x):
    return AudioBuffer(np.asarray(x, dtype=np.float64), 16000)


class TestConvolve:
    def test_matches_direct_oracle(self):
        rng = np.random.default_rng(7)
        for n, m in [(50, 3), (1000, 64), (4096, 512), (16000, 2048), (333, 333)]:
            x = rng.standard_normal(n)
            h = rng.standard_normal(m)
            got = convolve(buf(x), h).samples
            want = direct_convolve(x, h)
            scale = max(np.max(np.abs(want)), 1.0)
            assert np.max(np.abs(got - want)) / scale <= 1e-9

    def test_identity_kernel(self):
        x = np.random.default_rng(0).standard_normal(2048)
        out = convolve(buf(x), np.array([1.0])).samples
        assert np.max(np.abs(out - x)) <= 1e-12

    def test_delay_kernel(self):
        x = np.random.default_rng(1).standard_normal(500)
        h = np.zeros(10)
        h[9] = 1.0
        out = convolve(buf(x), h).samples
        assert np.allclose(out[9:9 + 500], x, atol=1e-12)
        assert np.allclose(out[:9], 0.0)

    def test_out_len_truncates(self):
        x = np.ones(100)
        h = np.ones(5)
        assert convolve(buf(x), h).samples.size == 104
        assert convolve(buf(x), h, out_len=100).samples.size == 100
        with pytest.raises(ValueError, match="out_len"):
            convolve(buf(x), h, out_len=105)

    def test_empty_operand_rejected(self):
        with pytest.raises(ValueError, match="empty operand"):
            convolve(buf(np.ones(10)), np.array([]))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            convolve(buf(np.ones(10)), np.array([np.nan]))

    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
    @settings(max_examples=25, deadline=None)
    def test_kernel_scaling_is_linear(self, seed, c):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(600)
        h = rng.standard_normal(32)
        a = convolve(buf(x), c * h).samples
        b = c * convolve(buf(x), h).samples
        assert np.max(np.abs(a - b)) <= 1e-9 * max(1.0, np.max(np.abs(b)))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_superposition(self, seed):
        rng = np.random.default_rng(seed)
        x1 = rng.standard_normal(400)
        x2 = rng.standard_normal(400)
        h = rng.standard_normal(64)
        joint = convolve(buf(x1 + x2), h).samples
        split = convolve(buf(x1), h).samples + convolve(buf(x2), h).samples
        assert np.max(np.abs(joint - split)) <= 1e-9 * max(1.0, np.max(np.abs(split)))


class TestRmsLevel:
    def test_unit_constant_is_zero_db(self):
        assert abs(rms_level_db(buf(np.ones(16000)))) <= 1e-12

    def test_half_constant(self):
        got = rms_level_db(buf(0.5 * np.ones(16000)))
        assert abs(got - 20.0 * np.log10(0.5)) <= 1e-12

    def test_white_noise_near_unit_sigma(self):
        x = np.random.default_rng(3).standard_normal(160000)
        assert abs(rms_level_db(buf(x))) <= 0.05

    def test_silence_sentinel(self):
        assert rms_level_db(buf(np.zeros(100))) == SILENCE_DB


class TestActiveSpeechLevel:
    def test_constant_amplitude_degenerates_to_rms(self):
        # Always-active stationary signal: ASL collapses to RMS = -20 dB.
        x = 0.1 * np.ones(16000)
        assert abs(active_speech_level(buf(x)) - (-20.0)) <= 0.2

    def test_steady_tone_degenerates_to_rms(self):
        t = np.arange(16000) / 16000.0
        x = 0.1 * np.sin(2 * np.pi * 440.0 * t)
        want = 20.0 * np.log10(0.1 / np.sqrt(2.0))
        assert abs(active_speech_level(buf(x)) - want) <= 0.2

    def test_scale_shift_by_6db(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(48000) * 0.05
        x[8000:24000] *= 8.0  # a loud burst so activity gating engages
        a = active_speech_level(buf(x))
        b = active_speech_level(buf(2.0 * x))
        assert abs((b - a) - 20.0 * np.log10(2.0)) <= 1e-3

    def test_burst_tracks_active_portion_rms(self):
        # 0.5 s tone then 0.5 s near-silence at -60 dB. The 200 ms envelope
        # decays slowly enough that this shape can stay active end to end;
        # either way the level must match the RMS over the detected region.
        rng = np.random.default_rng(2)
        t = np.arange(8000) / 16000.0
        tone = 0.2 * np.sin(2 * np.pi * 1000.0 * t)
        tail = 1e-3 * rng.standard_normal(8000)
        b = buf(np.concatenate([tone, tail]))
        asl = active_speech_level(b)
        mask = active_mask(b)
        assert mask.any()
        active_rms = 10.0 * np.log10(np.mean(b.samples[mask] ** 2))
        assert abs(asl - active_rms) <= 0.5

    def test_long_silence_is_gated_out(self):
        # 1 s tone then 2 s near-silence: the tail far past the hangover
        # must drop out of the active region and out of the level.
        rng = np.random.default_rng(6)
        t = np.arange(16000) / 16000.0
        tone = 0.2 * np.sin(2 * np.pi * 1000.0 * t)
        tail = 1e-3 * rng.standard_normal(32000)
        b = buf(np.concatenate([tone, tail]))
        asl = active_speech_level(b)
        mask = active_mask(b)
        assert mask.any() and not mask.all()
        active_rms = 10.0 * np.log10(np.mean(b.samples[mask] ** 2))
        assert abs(asl - active_rms) <= 0.5
        assert asl > rms_level_db(b) + 1.0

    def test_asl_at_least_whole_signal_rms(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            x = rng.standard_normal(32000) * 0.01
            start = rng.integers(0, 16000)
            x[start:start + 8000] += rng.standard_normal(8000)
            b = buf(x)
            assert active_speech_level(b) >= rms_level_db(b) - 1e-9

    def test_silence_sentinel(self):
        assert active_speech_level(buf(np.zeros(1600))) == SILENCE_DB

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
    @settings(max_examples=20, deadline=None)
    def test_scale_equivariance(self, seed, c):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(32000) * 0.1
        x[4000:20000] *= 5.0
        a = active_speech_level(buf(x))
        s = active_speech_level(buf(c * x))
        assert abs(s - (a + 20.0 * np.log10(c))) <= 1e-3


class TestWavIO:
    def test_pcm16_frozen_values(self, tmp_path):
        # Values chosen to be exactly representable at the 16-bit scale.
        x = np.array([0.0, 16384.0 / 32767.0, -16384.0 / 32767.0, 1.0])
        p = tmp_path / "a.wav"
        write_wav(p, buf(x), bit_depth=16)
        back = read_wav(p)
        assert back.sample_rate == 16000
        assert np.max(np.abs(back.samples - x)) <= 1.0 / 32767.0

    def test_float32_bit_identical(self, tmp_path):
        x = np.random.default_rng(9).standard_normal(1000) * 3.0
        p = tmp_path / "f.wav"
        write_wav(p, buf(x), bit_depth=32)
        back = read_wav(p)
        assert np.array_equal(back.samples, x.astype(np.float32).astype(np.float64))

    def test_float32_preserves_overrange(self, tmp_path):
        x = np.array([2.5, -7.0, 0.125])
        p = tmp_path / "o.wav"
        write_wav(p, buf(x), bit_depth=32)
        assert np.array_equal(read_wav(p).samples, x)

    def test_pcm16_clips_overrange(self, tmp_path):
        x = np.array([2.0, -2.0])
        p = tmp_path / "c.wav"
        write_wav(p, buf(x), bit_depth=16)
        back = read_wav(p).samples
        assert abs(back[0] - 1.0) <= 1.0 / 32767.0
        assert abs(back[1] + 32768.0 / 32767.0) <= 1e-12

    def test_malformed_header_rejected(self, tmp_path):
        p = tmp_path / "bad.wav"
        p.write_bytes(b"RIFFxxxxNOTW")
        with pytest.raises(ValueError, match="malformed header"):
            read_wav(p)

    def test_truncated_file_rejected(self, tmp_path):
        p = tmp_path / "t.wav"
        p.write_bytes(b"RIF")
        with pytest.raises(ValueError, match="malformed header"):
            read_wav(p)

    def test_sample_rate_round_trip(self, tmp_path):
        x = np.zeros(10)
        p = tmp_path / "sr.wav"
        write_wav(p, AudioBuffer(x, 48000), bit_depth=32)
        assert read_wav(p).sample_rate == 48000


class TestAudioBuffer:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            AudioBuffer(np.array([1.0, np.inf]), 16000)

    def test_rejects_2d(self):
        with pytest.raises(ValueError):
            AudioBuffer(np.zeros((2, 10)), 16000)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            AudioBuffer(np.zeros(10), 0)

    def test_scaled(self):
        b = buf(np.ones(4)).scaled(0.5)
        assert np.all(b.samples == 0.5)

    def test_duration(self):
        assert buf(np.zeros(8000)).duration == 0.5
