"""System identification round-trips, sweep deconvolution, IR perturbation."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hakws.audio import AudioBuffer, convolve
from hakws.errors import ConfigError, DataError, DivergenceError, LowEnergyWarning
from hakws.transfer import (
    ImpulseResponse,
    PerturbationParams,
    TransferFunctionSet,
    deconvolve_sweep,
    estimate_ir_lms,
    generate_exp_sweep,
    load_ir,
    perturb_tf,
    save_ir,
)


def buf(x):
    return AudioBuffer(np.asarray(x, dtype=np.float64), 16000)


def misalignment_db(estimate, truth):
    truth = np.asarray(truth, dtype=np.float64)
    est = np.zeros_like(truth)
    est[:estimate.size] = estimate[:truth.size]
    return 10.0 * np.log10(np.sum((est - truth) ** 2) / np.sum(truth ** 2))


def band_error_db(estimate, truth, sample_rate=16000, lo=100.0, hi=7000.0):
    n = 4096
    freq = np.fft.rfftfreq(n, 1.0 / sample_rate)
    band = (freq >= lo) & (freq <= hi)
    te = np.fft.rfft(truth, n)[band]
    ee = np.fft.rfft(estimate, n)[band]
    return 10.0 * np.log10(np.sum(np.abs(ee - te) ** 2) / np.sum(np.abs(te) ** 2))


class TestLms:
    def test_identity_system(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(20000)
        ir = estimate_ir_lms(buf(x), buf(x), taps=8)
        truth = np.zeros(8)
        truth[0] = 1.0
        assert misalignment_db(ir.taps, truth) <= -40.0

    def test_random_64_tap_system(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(100000)
        h = rng.standard_normal(64) * np.exp(-np.arange(64) / 16.0)
        d = convolve(buf(x), h, out_len=x.size)
        ir = estimate_ir_lms(buf(x), d, taps=64, passes=2)
        assert misalignment_db(ir.taps, h) <= -40.0

    @given(st.integers(0, 2**32 - 1), st.integers(4, 128))
    @settings(max_examples=5, deadline=None)
    def test_round_trip_property(self, seed, taps):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(100000)
        h = rng.standard_normal(taps) * np.exp(-np.arange(taps) / max(4, taps / 4))
        d = convolve(buf(x), h, out_len=x.size)
        ir = estimate_ir_lms(buf(x), d, taps=taps, passes=2)
        assert misalignment_db(ir.taps, h) <= -40.0

    def test_zero_input_rejected(self):
        with pytest.raises(DataError, match="insufficient excitation"):
            estimate_ir_lms(buf(np.zeros(1000)), buf(np.zeros(1000)), taps=8)

    def test_divergence_flagged(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(5000)
        d = convolve(buf(x), rng.standard_normal(16), out_len=x.size)
        with pytest.raises(DivergenceError, match="step size"):
            estimate_ir_lms(buf(x), d, taps=16, step_size=4.0)

    def test_bad_step_size_rejected(self):
        with pytest.raises(ConfigError):
            estimate_ir_lms(buf(np.ones(100)), buf(np.ones(100)), taps=4,
                            step_size=0.0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length mismatch"):
            estimate_ir_lms(buf(np.ones(10)), buf(np.ones(11)), taps=2)


class TestSweep:
    def test_instantaneous_frequency_endpoints(self):
        sweep, _ = generate_exp_sweep(20.0, 8000.0, 2.0, 16000)
        x = sweep.samples
        # Instantaneous frequency from zero-crossing spacing near each end.
        def local_freq(seg, rate):
            crossings = np.where(np.diff(np.signbit(seg)))[0]
            period = 2.0 * np.mean(np.diff(crossings))
            return rate / period

        f0 = local_freq(x[:4000], 16000)       # first 0.25 s, ~20-40 Hz
        f1 = local_freq(x[-200:], 16000)       # last 12.5 ms, ~8 kHz
        start_expected = 20.0 * np.exp(0.125 / (2.0 / np.log(8000.0 / 20.0)))
        assert abs(f0 - start_expected) / start_expected <= 0.05
        assert abs(f1 - 8000.0) / 8000.0 <= 0.05

    def test_phase_starts_at_f_start(self):
        # Analytic check: the phase derivative at t=0 is exactly f_start and
        # at t=duration is exactly f_end.
        f_start, f_end, dur, rate = 20.0, 8000.0, 2.0, 16000
        ell = dur / np.log(f_end / f_start)
        t = np.array([0.0, dur])
        inst = f_start * np.exp(t / ell)
        assert abs(inst[0] - f_start) <= 1e-9
        assert abs(inst[1] - f_end) / f_end <= 1e-9

    def test_self_deconvolution_peak_to_sidelobe(self):
        sweep, inverse = generate_exp_sweep(20.0, 8000.0, 2.0, 16000)
        pulse = convolve(sweep, inverse.samples).samples
        center = len(inverse) - 1
        peak = abs(pulse[center])
        guard = 16000 // 100  # keep 10 ms around the main lobe
        sidelobes = np.concatenate([pulse[:center - guard],
                                    pulse[center + guard:]])
        psr = 20.0 * np.log10(peak / np.max(np.abs(sidelobes)))
        assert peak == pytest.approx(1.0, abs=1e-6)
        assert psr >= 40.0

    def test_equal_frequencies_rejected(self):
        with pytest.raises(ValueError, match="f_start"):
            generate_exp_sweep(1000.0, 1000.0, 1.0, 16000)

    def test_above_nyquist_rejected(self):
        with pytest.raises(ValueError):
            generate_exp_sweep(20.0, 9000.0, 1.0, 16000)


class TestDeconvolve:
    def test_sweep_itself_gives_unit_impulse(self):
        sweep, inverse = generate_exp_sweep(20.0, 8000.0, 2.0, 16000)
        ir = deconvolve_sweep(sweep, inverse, ir_len=64)
        assert ir.taps[0] == pytest.approx(1.0, abs=1e-3)
        assert np.max(np.abs(ir.taps[8:])) <= 0.02

    def test_known_ir_round_trip(self):
        rng = np.random.default_rng(3)
        sweep, inverse = generate_exp_sweep(20.0, 8000.0, 2.0, 16000)
        h = rng.standard_normal(128) * np.exp(-np.arange(128) / 32.0)
        rec = convolve(sweep, h)
        ir = deconvolve_sweep(rec, inverse, ir_len=128)
        assert band_error_db(ir.taps, h) <= -40.0

    def test_silence_flagged_low_energy(self):
        _, inverse = generate_exp_sweep(20.0, 8000.0, 1.0, 16000)
        rec = buf(np.zeros(16000))
        with pytest.warns(LowEnergyWarning, match="low energy"):
            ir = deconvolve_sweep(rec, inverse, ir_len=32)
        assert np.all(ir.taps == 0.0)

    def test_overlong_ir_len_rejected(self):
        sweep, inverse = generate_exp_sweep(20.0, 8000.0, 0.5, 16000)
        with pytest.raises(ValueError, match="support"):
            deconvolve_sweep(sweep, inverse, ir_len=len(sweep) + 1)

    def test_rate_mismatch_rejected(self):
        sweep, inverse = generate_exp_sweep(20.0, 8000.0, 0.5, 16000)
        with pytest.raises(ValueError, match="rate"):
            deconvolve_sweep(AudioBuffer(sweep.samples, 48000), inverse, 8)


class TestPerturb:
    def test_zero_sigmas_identity(self):
        taps = np.random.default_rng(4).standard_normal(128)
        ir = ImpulseResponse(taps, 16000)
        out = perturb_tf(ir, PerturbationParams(0.0, 0.0, seed=1))
        assert np.array_equal(out.taps, taps)

    def test_same_seed_bit_identical(self):
        ir = ImpulseResponse(np.random.default_rng(5).standard_normal(64), 16000)
        params = PerturbationParams(seed=99)
        a = perturb_tf(ir, params)
        b = perturb_tf(ir, params)
        assert np.array_equal(a.taps, b.taps)

    def test_different_seeds_differ(self):
        ir = ImpulseResponse(np.ones(64), 16000)
        a = perturb_tf(ir, PerturbationParams(seed=1))
        b = perturb_tf(ir, PerturbationParams(seed=2))
        assert not np.array_equal(a.taps, b.taps)

    def test_monte_carlo_moments(self):
        # Single unit tap perturbed many times: mean 1, std of (tap-1) 0.1.
        ir = ImpulseResponse(np.array([1.0]), 16000)
        rng = np.random.default_rng(6)
        params = PerturbationParams()
        draws = np.array([perturb_tf(ir, params, rng).taps[0]
                          for _ in range(100000)])
        assert abs(np.mean(draws) - 1.0) <= 0.002
        assert abs(np.std(draws - 1.0) - 0.1) <= 0.002

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError, match="sigmas"):
            PerturbationParams(sigma_mult=-0.1)

    def test_kind_and_rate_preserved(self):
        ir = ImpulseResponse(np.ones(8), 16000, kind="hrtf")
        out = perturb_tf(ir, PerturbationParams(seed=0))
        assert out.kind == "hrtf" and out.sample_rate == 16000


def complete_tf_set(rng, ir_len=8):
    ovtf = {m: ImpulseResponse(rng.standard_normal(ir_len), 16000, "own_voice")
            for m in ("iec", "front", "rear")}
    hrtf = {(s, m): ImpulseResponse(rng.standard_normal(ir_len), 16000, "hrtf")
            for s in range(1, 17) for m in ("iec", "front", "rear")}
    return TransferFunctionSet("subj01", ovtf, hrtf)


class TestTransferFunctionSet:
    def test_complete_set_accepted(self):
        tfs = complete_tf_set(np.random.default_rng(7))
        assert tfs.sample_rate == 16000

    def test_missing_mic_rejected(self):
        rng = np.random.default_rng(8)
        tfs = complete_tf_set(rng)
        bad = dict(tfs.ovtf)
        del bad["rear"]
        with pytest.raises(ValueError, match="missing own-voice"):
            TransferFunctionSet("s", bad, tfs.hrtf)

    def test_missing_speaker_rejected(self):
        rng = np.random.default_rng(9)
        tfs = complete_tf_set(rng)
        bad = dict(tfs.hrtf)
        del bad[(16, "front")]
        with pytest.raises(ValueError, match="missing HRTF"):
            TransferFunctionSet("s", tfs.ovtf, bad)

    def test_mixed_rates_rejected(self):
        rng = np.random.default_rng(10)
        tfs = complete_tf_set(rng)
        bad = dict(tfs.ovtf)
        bad["front"] = ImpulseResponse(np.ones(8), 48000, "own_voice")
        with pytest.raises(ValueError, match="mixed sample rates"):
            TransferFunctionSet("s", bad, tfs.hrtf)


class TestPersistence:
    def test_round_trip_with_sidecar(self, tmp_path):
        taps = np.random.default_rng(11).standard_normal(256)
        ir = ImpulseResponse(taps, 16000, "hrtf")
        p = tmp_path / "ir.wav"
        save_ir(p, ir, subject_id="subj03", mic_id="rear", loudspeaker=7)
        back, meta = load_ir(p)
        assert np.array_equal(back.taps, taps.astype(np.float32).astype(np.float64))
        assert back.kind == "hrtf"
        assert meta["subject_id"] == "subj03"
        assert meta["mic_id"] == "rear"
        assert meta["loudspeaker"] == 7

    def test_own_voice_has_no_speaker(self, tmp_path):
        ir = ImpulseResponse(np.ones(8), 16000, "own_voice")
        p = tmp_path / "ov.wav"
        save_ir(p, ir, subject_id="s", mic_id="iec")
        _, meta = load_ir(p)
        assert meta["loudspeaker"] is None

    def test_missing_sidecar_rejected(self, tmp_path):
        ir = ImpulseResponse(np.ones(8), 16000)
        p = tmp_path / "x.wav"
        save_ir(p, ir, subject_id="s", mic_id="front")
        (tmp_path / "x.wav.meta").unlink()
        with pytest.raises(DataError, match="sidecar"):
            load_ir(p)
