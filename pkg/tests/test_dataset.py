"""Dataset builder: planning, seeding, determinism, manifests, config files."""

import numpy as np
import pytest

from hakws.audio import read_wav
from hakws.dataset import (
    AMBIENT_CLASS,
    CLASS_LABELS,
    TEST_SNRS,
    TRAIN_SUBJECTS,
    TRAIN_VAL_SNRS,
    CleanUtterance,
    DatasetConfig,
    build_dataset,
    filter_clean_corpus,
    load_dataset_config,
    parse_dataset_config,
    plan_records,
    read_manifest,
    record_seed,
    save_dataset_config,
)
from hakws.errors import ConfigError
from hakws.synthetic import (
    make_clean_corpus,
    make_noise_banks,
    make_synthetic_tf_set,
    synth_class_utterance,
)


@pytest.fixture(scope="module")
def small_assets():
    rng = np.random.default_rng(0)
    corpus = {
        "train": make_clean_corpus(np.random.default_rng(1), 2,
                                   classes=CLASS_LABELS, id_prefix="tr"),
        "val": make_clean_corpus(np.random.default_rng(2), 1,
                                 classes=CLASS_LABELS, id_prefix="va"),
        "test": make_clean_corpus(np.random.default_rng(3), 1,
                                  classes=CLASS_LABELS, id_prefix="te"),
    }
    tf_sets = {f"subj{i:02d}": make_synthetic_tf_set(f"subj{i:02d}",
                                                     np.random.default_rng(10 + i))
               for i in range(1, 6)}
    banks = make_noise_banks(seed=7)
    assert rng is not None
    return corpus, tf_sets, banks


class TestTaxonomy:
    def test_twelve_classes(self):
        assert len(CLASS_LABELS) == 12
        assert CLASS_LABELS[:10] == ("yes", "no", "up", "down", "left",
                                     "right", "on", "off", "stop", "go")

    def test_grids(self):
        assert TRAIN_VAL_SNRS == (-15.0, -5.0, 5.0, 15.0, 25.0)
        assert TEST_SNRS == (-18.0, -9.0, 0.0, 9.0, 18.0)


class TestRecordSeed:
    def test_stable(self):
        assert record_seed(0, "u1", -15.0, "babble") == \
            record_seed(0, "u1", -15.0, "babble")

    def test_sensitive_to_every_component(self):
        base = record_seed(0, "u1", -15.0, "babble")
        assert record_seed(1, "u1", -15.0, "babble") != base
        assert record_seed(0, "u2", -15.0, "babble") != base
        assert record_seed(0, "u1", -5.0, "babble") != base
        assert record_seed(0, "u1", -15.0, "music") != base


class TestCleanFilter:
    def test_bursty_synthetic_passes(self):
        rng = np.random.default_rng(4)
        utt = CleanUtterance("a", "yes", "spk00",
                             synth_class_utterance("yes", rng))
        assert filter_clean_corpus([utt]) == [utt]

    def test_noisy_item_dropped(self):
        rng = np.random.default_rng(5)
        buf = synth_class_utterance("yes", rng)
        noisy = buf.scaled(1.0)
        noisy = type(buf)(buf.samples + 0.05 * rng.standard_normal(len(buf)),
                          buf.sample_rate)
        utt = CleanUtterance("a", "yes", "spk00", noisy)
        assert filter_clean_corpus([utt]) == []

    def test_ambient_passes_through(self):
        utt = CleanUtterance("amb", AMBIENT_CLASS, "spk00", None)
        assert filter_clean_corpus([utt]) == [utt]


class TestPlan:
    def test_partition_layout_and_counts(self, small_assets):
        corpus, _, _ = small_assets
        cfg = DatasetConfig(seed=0)
        plans = plan_records(cfg, corpus)
        test_records = [r for _, r in plans if r.set_name == "test"]
        # 12 test utterances over 5 partitions, each at 5 SNRs.
        assert len(test_records) == 12 * 5
        parts = {r.partition for r in test_records}
        assert parts == {0, 1, 2, 3, 4}
        # Round-robin: partition sizes differ by at most one.
        sizes = [len({r.utt_id for r in test_records if r.partition == p})
                 for p in sorted(parts)]
        assert max(sizes) - min(sizes) <= 1

    def test_each_utterance_in_one_partition(self, small_assets):
        corpus, _, _ = small_assets
        plans = plan_records(DatasetConfig(seed=0), corpus)
        for set_name in ("train", "val", "test"):
            seen = {}
            for _, r in plans:
                if r.set_name == set_name:
                    seen.setdefault(r.utt_id, set()).add(r.partition)
            assert all(len(parts) == 1 for parts in seen.values())

    def test_speaker_subject_binding_consistent(self, small_assets):
        corpus, _, _ = small_assets
        plans = plan_records(DatasetConfig(seed=0), corpus)
        binding = {}
        for _, r in plans:
            if r.set_name == "train":
                assert r.ha_subject in TRAIN_SUBJECTS
                binding.setdefault(r.gscd_speaker, set()).add(r.ha_subject)
        assert all(len(s) == 1 for s in binding.values())

    def test_val_test_single_subject(self, small_assets):
        corpus, _, _ = small_assets
        plans = plan_records(DatasetConfig(seed=0), corpus)
        assert {r.ha_subject for _, r in plans if r.set_name == "val"} == {"subj04"}
        assert {r.ha_subject for _, r in plans if r.set_name == "test"} == {"subj05"}

    def test_snr_grid_assignment(self, small_assets):
        corpus, _, _ = small_assets
        plans = plan_records(DatasetConfig(seed=0), corpus)
        train_snrs = {r.target_snr_db for _, r in plans if r.set_name == "train"}
        test_snrs = {r.target_snr_db for _, r in plans if r.set_name == "test"}
        assert train_snrs == set(TRAIN_VAL_SNRS)
        assert test_snrs == set(TEST_SNRS)


class TestBuild:
    def test_build_writes_waves_and_manifest(self, small_assets, tmp_path):
        corpus, tf_sets, banks = small_assets
        tiny = {
            "train": corpus["train"][:4],
            "val": corpus["val"][:2],
            "test": corpus["test"][:2],
        }
        cfg = DatasetConfig(seed=3)
        records = build_dataset(cfg, tiny, tf_sets, banks, tmp_path)
        assert len(records) == (4 + 2 + 2) * 5
        back = read_manifest(tmp_path / "manifest.tsv")
        assert back == records
        first = records[0]
        for mic in ("iec", "front", "rear"):
            wav = read_wav(tmp_path / first.paths[mic])
            assert len(wav) == 16000
            assert wav.sample_rate == 16000

    def test_re_render_is_bit_identical(self, small_assets, tmp_path):
        corpus, tf_sets, banks = small_assets
        tiny = {"test": corpus["test"][:2]}
        cfg = DatasetConfig(seed=9)
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        ra = build_dataset(cfg, tiny, tf_sets, banks, a_dir)
        rb = build_dataset(cfg, tiny, tf_sets, banks, b_dir)
        assert ra == rb
        for record in ra:
            for mic in ("iec", "front", "rear"):
                wa = (a_dir / record.paths[mic]).read_bytes()
                wb = (b_dir / record.paths[mic]).read_bytes()
                assert wa == wb

    def test_thread_count_does_not_change_output(self, small_assets, tmp_path):
        corpus, tf_sets, banks = small_assets
        tiny = {"test": corpus["test"][:3]}
        one = DatasetConfig(seed=11, workers=1)
        four = DatasetConfig(seed=11, workers=4)
        d1, d4 = tmp_path / "w1", tmp_path / "w4"
        r1 = build_dataset(one, tiny, tf_sets, banks, d1)
        r4 = build_dataset(four, tiny, tf_sets, banks, d4)
        assert r1 == r4
        assert (d1 / "manifest.tsv").read_bytes() == (d4 / "manifest.tsv").read_bytes()
        for record in r1:
            p = record.paths["front"]
            assert (d1 / p).read_bytes() == (d4 / p).read_bytes()

    def test_ambient_records_have_no_own_voice(self, small_assets, tmp_path):
        corpus, tf_sets, banks = small_assets
        amb = [u for u in corpus["test"] if u.class_label == AMBIENT_CLASS]
        records = build_dataset(DatasetConfig(seed=5), {"test": amb},
                                tf_sets, banks, tmp_path)
        # Noise-only files must still carry energy at a plausible level.
        for record in records:
            wav = read_wav(tmp_path / record.paths["front"])
            assert np.any(wav.samples != 0.0)


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        cfg = DatasetConfig(seed=42, train_per_class=3, perturb_train=False,
                            sigma_add=2e-5, test_snrs=(-6.0, 0.0, 6.0))
        p = tmp_path / "ds.cfg"
        save_dataset_config(p, cfg)
        assert load_dataset_config(p) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_dataset_config("seed=1\nbogus=2\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="bad value"):
            parse_dataset_config("seed=abc\n")

    def test_comments_and_blanks_ignored(self):
        cfg = parse_dataset_config("# comment\n\nseed=7\nperturb_train=false\n")
        assert cfg.seed == 7 and cfg.perturb_train is False

    def test_malformed_line_rejected(self):
        with pytest.raises(ConfigError, match="key=value"):
            parse_dataset_config("seed 1\n")
