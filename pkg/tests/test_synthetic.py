"""Synthetic assets: corpus separability hooks, TF sets, noise banks."""

import numpy as np
import pytest

from hakws.dataset import AMBIENT_CLASS, CLASS_LABELS
from hakws.scene import a_posteriori_snr, compose_scenario
from hakws.synthetic import (
    CLASS_FUNDAMENTALS,
    lowpass_fir,
    make_clean_corpus,
    make_noise_bank,
    make_noise_banks,
    make_synthetic_tf_set,
    synth_class_utterance,
)


class TestCorpus:
    def test_counts_and_classes(self):
        utts = make_clean_corpus(np.random.default_rng(0), 2)
        assert len(utts) == 24
        assert {u.class_label for u in utts} == set(CLASS_LABELS)

    def test_all_speech_items_pass_clean_filter(self):
        utts = make_clean_corpus(np.random.default_rng(1), 3)
        for u in utts:
            if u.buffer is not None:
                assert a_posteriori_snr(u.buffer) > 40.0

    def test_fundamentals_below_two_khz(self):
        assert all(f < 2000.0 for f in CLASS_FUNDAMENTALS.values())

    def test_ambient_has_no_buffer(self):
        utts = make_clean_corpus(np.random.default_rng(2), 1)
        amb = [u for u in utts if u.class_label == AMBIENT_CLASS]
        assert len(amb) == 1 and amb[0].buffer is None

    def test_class_spectra_distinct(self):
        rng = np.random.default_rng(3)
        a = synth_class_utterance("yes", rng)
        b = synth_class_utterance("go", rng)
        fa = np.argmax(np.abs(np.fft.rfft(a.samples)))
        fb = np.argmax(np.abs(np.fft.rfft(b.samples)))
        assert fa != fb


class TestTfSets:
    def test_complete_and_valid(self):
        tfs = make_synthetic_tf_set("s1", np.random.default_rng(4))
        assert len(tfs.hrtf) == 48
        assert set(tfs.ovtf) == {"iec", "front", "rear"}

    def test_iec_lowpass_kills_high_band(self):
        tfs = make_synthetic_tf_set("s2", np.random.default_rng(5),
                                    iec_lowpass_hz=2200.0)
        h = np.fft.rfft(tfs.ovtf["iec"].taps, 1024)
        freqs = np.fft.rfftfreq(1024, 1.0 / 16000)
        low = np.mean(np.abs(h[(freqs > 200) & (freqs < 1800)]))
        high = np.mean(np.abs(h[freqs > 4000]))
        assert high < 0.05 * low

    def test_iec_noise_gain_scales_front_copy(self):
        tfs = make_synthetic_tf_set("s3", np.random.default_rng(6),
                                    iec_noise_gain=0.1)
        for spk in range(1, 17):
            iec = tfs.hrtf[(spk, "iec")].taps
            front = tfs.hrtf[(spk, "front")].taps
            assert np.allclose(iec, 0.1 * front, atol=1e-15)

    def test_default_iec_noise_independent(self):
        tfs = make_synthetic_tf_set("s4", np.random.default_rng(7))
        iec = tfs.hrtf[(1, "iec")].taps
        front = tfs.hrtf[(1, "front")].taps
        assert not np.allclose(iec, front)


class TestLowpassFir:
    def test_unit_dc_gain(self):
        h = lowpass_fir(2200.0, 65)
        assert np.sum(h) == pytest.approx(1.0, abs=1e-12)

    def test_stopband(self):
        h = lowpass_fir(2200.0, 129)
        spec = np.abs(np.fft.rfft(h, 2048))
        freqs = np.fft.rfftfreq(2048, 1.0 / 16000)
        assert np.max(spec[freqs > 3500]) < 0.02


class TestBanks:
    def test_bank_supports_every_scenario_type(self):
        rng = np.random.default_rng(8)
        bank = make_noise_bank(rng)
        for noise_type in ("babble", "music", "ssn", "interferer", "tv"):
            sc = compose_scenario(noise_type, bank, rng)
            assert sc.noise_type == noise_type

    def test_train_and_test_material_disjoint(self):
        banks = make_noise_banks(seed=1)
        train_ids = {id(b) for b in banks["train"].babble_female}
        test_ids = {id(b) for b in banks["test"].babble_female}
        assert not train_ids & test_ids
        a = banks["train"].babble_female[0].samples
        b = banks["test"].babble_female[0].samples
        assert not np.array_equal(a, b)

    def test_val_shares_train_bank(self):
        banks = make_noise_banks(seed=2)
        assert banks["val"] is banks["train"]
