"""End-to-end experiment drivers over synthetic assets.

These functions wire the synthetic corpus, transfer-function sets, and
noise banks into the dataset builder and training harness. They back the
`synth` CLI verb and the runnable scripts (toy overfit, microphone-input
comparison).
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from .dataset import (KEYWORDS, MANIFEST_NAME, TRAIN_SUBJECTS, VAL_SUBJECT,
                      TEST_SUBJECT, CLASS_LABELS, DatasetConfig,
                      build_dataset, filter_clean_corpus, read_manifest,
                      record_seed, save_dataset_config)
from .harness import (TrainConfig, evaluate, load_model, load_split, train,
                      train_single)
from .synthetic import (make_clean_corpus, make_noise_banks,
                        make_synthetic_tf_set)

ASSET_SUBJECTS = TRAIN_SUBJECTS + (VAL_SUBJECT, TEST_SUBJECT)
_SET_PREFIXES = (("train", "tr"), ("val", "va"), ("test", "te"))


def make_assets(config: DatasetConfig, classes=CLASS_LABELS,
                iec_lowpass_hz: float | None = None,
                iec_noise_gain: float = 1.0):
    """Clean corpora, per-subject transfer functions, and noise banks.

    Everything derives from config.seed through hashed sub-seeds, so the
    assets are independent of build order and worker count.
    """
    per_class = {
        "train": config.train_per_class,
        "val": config.val_per_class,
        "test": config.test_per_class,
    }
    corpus = {}
    for set_name, prefix in _SET_PREFIXES:
        rng = np.random.default_rng(
            record_seed(config.seed, f"corpus-{set_name}", 0.0, "assets"))
        utts = make_clean_corpus(rng, per_class[set_name], classes,
                                 seconds=config.utterance_seconds,
                                 id_prefix=prefix)
        corpus[set_name] = filter_clean_corpus(
            utts, config.clean_snr_threshold_db)
    tf_sets = {}
    for subject in ASSET_SUBJECTS:
        rng = np.random.default_rng(
            record_seed(config.seed, f"tf-{subject}", 0.0, "assets"))
        tf_sets[subject] = make_synthetic_tf_set(
            subject, rng, ir_len=config.ir_len,
            iec_lowpass_hz=iec_lowpass_hz,
            iec_noise_gain=iec_noise_gain)
    banks = make_noise_banks(config.seed)
    return corpus, tf_sets, banks


def build_synthetic_dataset(config: DatasetConfig, out_dir,
                            classes=CLASS_LABELS,
                            iec_lowpass_hz: float | None = None,
                            iec_noise_gain: float = 1.0,
                            corpus_override: dict | None = None) -> list:
    """Render a full synthetic dataset; returns the manifest records."""
    corpus, tf_sets, banks = make_assets(
        config, classes, iec_lowpass_hz=iec_lowpass_hz,
        iec_noise_gain=iec_noise_gain)
    if corpus_override is not None:
        corpus = corpus_override(corpus) \
            if callable(corpus_override) else corpus_override
    records = build_dataset(config, corpus, tf_sets, banks, out_dir)
    # worker count is execution parallelism, not dataset identity; normalize
    # it so re-renders of the same data produce byte-equal trees
    save_dataset_config(Path(out_dir) / "dataset.cfg",
                        replace(config, workers=1))
    return records


def overfit_toy(work_dir, seed: int = 0, epochs: int = 60,
                utterances: int = 200, num_classes: int = 3,
                tau: float = 1.0, batch_size: int = 50):
    """Memorization check: small clean-ish set, single mic, one seed.

    Returns (run result, final training accuracy in percent). Batch 50
    keeps the peak of the backward graph comfortably inside desk RAM.
    """
    work_dir = Path(work_dir)
    classes = KEYWORDS[:num_classes]
    per_class = -(-utterances // num_classes)  # ceil
    config = DatasetConfig(seed=seed, train_per_class=per_class,
                           train_snrs=(25.0,), workers=1)

    def trim(corpus):
        return {"train": corpus["train"][:utterances]}

    data_dir = work_dir / "data"
    records = build_synthetic_dataset(config, data_dir, classes=classes,
                                      corpus_override=trim)
    train_config = TrainConfig(
        epochs=epochs, batch_size=batch_size, seeds=(seed,), mics=("iec",),
        tau=tau, data_dir=str(data_dir), out_dir=str(work_dir / "runs"),
        classes=classes)
    result = train(train_config, records)[0]
    model = load_model(result.final_path)
    train_records = [r for r in records if r.set_name == "train"]
    features, labels = load_split(train_records, data_dir,
                                  train_config.mics)
    predictions = _predict(model, features)
    accuracy = 100.0 * float((predictions == labels).mean())
    return result, accuracy


def _predict(model, features, batch_size: int = 100) -> np.ndarray:
    from .engine import Tensor

    model.eval()
    out = np.empty(features.shape[0], dtype=np.int64)
    for start in range(0, features.shape[0], batch_size):
        logits = model(Tensor(features[start:start + batch_size])).data
        out[start:start + batch_size] = logits.argmax(axis=1)
    return out


MIC_SETUPS = (("iec",), ("front",), ("iec", "front"))


def mic_trend(work_dir, seeds=(0, 1, 2), num_classes: int = 3,
              epochs: int = 80, train_per_class: int = 32,
              snrs=(-12.0,), dataset_seed: int = 0,
              tau: float = 1.0, batch_size: int = 32,
              peak_lr: float = 0.03) -> dict:
    """Microphone-input comparison on one shared dataset.

    The transfer functions encode the in-ear physics: own voice
    low-passed at 2.2 kHz, in-ear noise paths 20 dB below the front mic;
    behind-the-ear paths are full band with unattenuated noise. Reports
    mean test accuracy at the lowest SNR per mic setup, averaged over
    seeds, plus the ordering verdicts. Training, validation (the
    best-model pick), and the comparison all happen at the lowest SNR:
    mixing in easier SNRs teaches the two-channel model to lean on the
    broadband channel exactly where it degrades, and selecting on an
    easy SNR picks those checkpoints. The comparison SNR keeps the
    broadband channel noisy but not hopeless; classes differ above the
    in-ear cutoff, so the combined model has high-band cues to recover
    rather than just a noise channel to suppress. The default peak rate
    is gentler than the full-scale recipe: at this toy scale the
    two-channel models oscillate at 0.1 and can sit at chance for a
    whole run. They also break the channel symmetry slowly (roughly 15
    epochs at chance before taking off), so the schedule leaves most of
    its length after that point; the single-mic models saturate long
    before it ends.
    """
    work_dir = Path(work_dir)
    classes = KEYWORDS[:num_classes]
    lowest = min(snrs)
    config = DatasetConfig(
        seed=dataset_seed, train_per_class=train_per_class,
        val_per_class=8, test_per_class=32,
        train_snrs=tuple(snrs), val_snrs=(lowest,),
        test_snrs=(lowest,), workers=1)
    data_dir = work_dir / "data"
    records = build_synthetic_dataset(
        config, data_dir, classes=classes,
        iec_lowpass_hz=2200.0, iec_noise_gain=0.1)
    low_records = [r for r in records
                   if r.set_name == "test" and r.target_snr_db == lowest]

    accuracies = {}
    for mics in MIC_SETUPS:
        name = "+".join(mics)
        train_config = TrainConfig(
            epochs=epochs, batch_size=batch_size, seeds=tuple(seeds),
            mics=mics, tau=tau, peak_lr=peak_lr, data_dir=str(data_dir),
            out_dir=str(work_dir / "runs" / name), classes=classes)
        results = train(train_config, records)
        report = evaluate([r.best_path for r in results], low_records,
                          data_dir, train_config.mics)
        accuracies[name] = {
            "mean": report.mean,
            "per_seed": report.per_seed,
        }
    iec = accuracies["iec"]["mean"]
    front = accuracies["front"]["mean"]
    both = accuracies["iec+front"]["mean"]
    return {
        "lowest_snr_db": lowest,
        "accuracies": accuracies,
        "iec_beats_front": iec > front,
        "both_at_least_iec": both >= iec,
    }
