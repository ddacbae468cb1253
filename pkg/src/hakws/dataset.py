"""Dataset builder: partitions, SNR grids, per-record seeding, manifests.

Each record is one (utterance, partition, SNR) cell rendered at all three
mics. Records are rendered from an RNG stream derived by hashing
(global seed, utterance id, SNR, partition), so any parallel schedule
produces bit-identical output.
"""

from __future__ import annotations

import dataclasses
import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import SAMPLE_RATE, AudioBuffer, write_wav
from .errors import ConfigError, DataError
from .scene import a_posteriori_snr, compose_scenario, synthesize_utterance
from .transfer import MIC_IDS, PerturbationParams

KEYWORDS = ("yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go")
FILLER_CLASS = "filler"
AMBIENT_CLASS = "ambient_noise"
CLASS_LABELS = KEYWORDS + (FILLER_CLASS, AMBIENT_CLASS)
LABEL_INDEX = {label: i for i, label in enumerate(CLASS_LABELS)}

TRAIN_VAL_SNRS = (-15.0, -5.0, 5.0, 15.0, 25.0)
TEST_SNRS = (-18.0, -9.0, 0.0, 9.0, 18.0)

TRAIN_PARTITIONS = ("babble", "music", "ssn")
VAL_PARTITIONS = ("babble", "music", "ssn")
TEST_PARTITIONS = ("babble", "music", "ssn", "interferer", "tv")
SEEN_NOISE_TYPES = frozenset(TRAIN_PARTITIONS)
UNSEEN_NOISE_TYPES = frozenset(TEST_PARTITIONS) - SEEN_NOISE_TYPES

TRAIN_SUBJECTS = ("subj01", "subj02", "subj03")
VAL_SUBJECT = "subj04"
TEST_SUBJECT = "subj05"

SET_NAMES = ("train", "val", "test")
MANIFEST_NAME = "manifest.tsv"


@dataclass(frozen=True)
class CleanUtterance:
    """One clean source clip. Ambient-class items carry no waveform; the
    own-voice term is zero and only the noise scene is rendered."""

    utt_id: str
    class_label: str
    gscd_speaker: str
    buffer: AudioBuffer | None

    def __post_init__(self):
        if self.class_label not in CLASS_LABELS:
            raise ValueError(f"unknown class {self.class_label!r}")
        if (self.buffer is None) != (self.class_label == AMBIENT_CLASS):
            raise ValueError("only ambient items may omit the waveform")


@dataclass(frozen=True)
class UtteranceRecord:
    """One manifest line: a rendered (utterance, partition, SNR) cell."""

    utt_id: str
    class_label: str
    gscd_speaker: str
    ha_subject: str
    set_name: str
    partition: int
    noise_type: str
    target_snr_db: float
    seed: int
    paths: dict  # mic id -> path relative to the dataset root


@dataclass
class DatasetConfig:
    """Flat key=value configuration for dataset synthesis."""

    seed: int = 0
    train_per_class: int = 2
    val_per_class: int = 1
    test_per_class: int = 2
    train_snrs: tuple = TRAIN_VAL_SNRS
    val_snrs: tuple = TRAIN_VAL_SNRS
    test_snrs: tuple = TEST_SNRS
    clean_snr_threshold_db: float = 40.0
    perturb_train: bool = True
    sigma_mult: float = 0.1
    sigma_add: float = 1e-5
    ambient_nominal_asl_db: float = -26.0
    utterance_seconds: float = 1.0
    ir_len: int = 64
    workers: int = 1

    def __post_init__(self):
        for name in ("train_per_class", "val_per_class", "test_per_class",
                     "ir_len", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(f"{v:g}" for v in value)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def save_dataset_config(path, config: DatasetConfig) -> None:
    lines = [f"{f.name}={_format_value(getattr(config, f.name))}"
             for f in dataclasses.fields(config)]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_dataset_config(text: str) -> DatasetConfig:
    fields = {f.name: f for f in dataclasses.fields(DatasetConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kind = fields[key].type
        try:
            if kind == "int":
                values[key] = int(value)
            elif kind == "float":
                values[key] = float(value)
            elif kind == "bool":
                if value not in ("true", "false"):
                    raise ValueError(value)
                values[key] = value == "true"
            elif kind == "tuple":
                values[key] = tuple(float(v) for v in value.split(","))
            else:
                values[key] = value
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
    return DatasetConfig(**values)


def load_dataset_config(path) -> DatasetConfig:
    return parse_dataset_config(Path(path).read_text())


def record_seed(global_seed: int, utt_id: str, snr_db: float, partition) -> int:
    """Stable per-record RNG seed; order-independent parallel rendering."""
    key = f"{global_seed}:{utt_id}:{snr_db:g}:{partition}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


def filter_clean_corpus(utterances, threshold_db: float = 40.0):
    """Drop speech items whose blind SNR estimate is at or below threshold.
    Ambient items pass through (they have no speech to grade)."""
    kept = []
    for utt in utterances:
        if utt.buffer is None:
            kept.append(utt)
        elif a_posteriori_snr(utt.buffer) > threshold_db:
            kept.append(utt)
    return kept


def _round_robin(items, n_bins):
    bins = [[] for _ in range(n_bins)]
    for i, item in enumerate(items):
        bins[i % n_bins].append(item)
    return bins


def plan_records(config: DatasetConfig, corpus: dict,
                 subject_binding: dict | None = None):
    """Lay out every record to render, without touching audio.

    corpus maps set name -> list of CleanUtterance. Training speakers are
    bound to one of the three training subjects at random (seeded);
    val/test use their single subject. Partition remainders go round-robin
    so partition sizes differ by at most one.
    """
    rng = np.random.default_rng(record_seed(config.seed, "plan", 0.0, "bind"))
    if subject_binding is None:
        speakers = sorted({u.gscd_speaker for u in corpus.get("train", ())})
        subject_binding = {
            spk: TRAIN_SUBJECTS[int(rng.integers(len(TRAIN_SUBJECTS)))]
            for spk in speakers
        }
    plans = []
    layout = (
        ("train", TRAIN_PARTITIONS, config.train_snrs),
        ("val", VAL_PARTITIONS, config.val_snrs),
        ("test", TEST_PARTITIONS, config.test_snrs),
    )
    for set_name, partitions, snrs in layout:
        utts = list(corpus.get(set_name, ()))
        order = rng.permutation(len(utts))
        shuffled = [utts[i] for i in order]
        for part_idx, part_utts in enumerate(_round_robin(shuffled, len(partitions))):
            noise_type = partitions[part_idx]
            for utt in part_utts:
                if set_name == "train":
                    subject = subject_binding[utt.gscd_speaker]
                elif set_name == "val":
                    subject = VAL_SUBJECT
                else:
                    subject = TEST_SUBJECT
                for snr in snrs:
                    seed = record_seed(config.seed, utt.utt_id, snr, noise_type)
                    rel = Path(set_name) / noise_type / f"{snr:g}"
                    paths = {m: str(rel / f"{utt.utt_id}_{m}.wav") for m in MIC_IDS}
                    plans.append((utt, UtteranceRecord(
                        utt_id=utt.utt_id, class_label=utt.class_label,
                        gscd_speaker=utt.gscd_speaker, ha_subject=subject,
                        set_name=set_name, partition=part_idx,
                        noise_type=noise_type, target_snr_db=snr,
                        seed=seed, paths=paths,
                    )))
    plans.sort(key=lambda p: (p[1].set_name, p[1].partition,
                              p[1].target_snr_db, p[1].utt_id))
    return plans


def render_record(utt: CleanUtterance, record: UtteranceRecord,
                  config: DatasetConfig, tfs, bank, out_dir) -> None:
    """Render one record's three mic files; bit-reproducible from its seed."""
    rng = np.random.default_rng(record.seed)
    scenario = compose_scenario(record.noise_type, bank, rng)
    length = int(round(config.utterance_seconds * SAMPLE_RATE))
    if utt.buffer is None:
        x = AudioBuffer(np.zeros(length), SAMPLE_RATE)
        nominal = config.ambient_nominal_asl_db
    else:
        x = utt.buffer
        nominal = None
    perturb = record.set_name == "train" and config.perturb_train
    params = PerturbationParams(config.sigma_mult, config.sigma_add, record.seed)
    result = synthesize_utterance(
        x, tfs, scenario, record.target_snr_db, perturb, rng,
        perturbation=params, nominal_asl_db=nominal,
    )
    for mic in MIC_IDS:
        path = Path(out_dir) / record.paths[mic]
        path.parent.mkdir(parents=True, exist_ok=True)
        write_wav(path, result[mic], bit_depth=32)


def build_dataset(config: DatasetConfig, corpus: dict, tf_sets: dict,
                  banks: dict, out_dir) -> list:
    """Render the whole dataset and write the manifest.

    corpus: set name -> CleanUtterance list (already clean-filtered).
    tf_sets: subject id -> TransferFunctionSet. banks: set name -> NoiseBank
    (train and val may share; test material must be disjoint).
    """
    missing = [s for s in SET_NAMES if s in corpus and s not in banks]
    if missing:
        raise DataError(f"missing noise banks for {missing}")
    plans = plan_records(config, corpus)
    for _, record in plans:
        if record.ha_subject not in tf_sets:
            raise DataError(f"missing transfer functions for {record.ha_subject}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def job(plan):
        utt, record = plan
        render_record(utt, record, config, tf_sets[record.ha_subject],
                      banks[record.set_name], out_dir)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(job, plans))
    else:
        for plan in plans:
            job(plan)

    records = [record for _, record in plans]
    write_manifest(out_dir / MANIFEST_NAME, records)
    return records


MANIFEST_FIELDS = ("utt_id", "class_label", "gscd_speaker", "ha_subject",
                   "set", "partition", "noise_type", "snr_db", "seed",
                   "path_iec", "path_front", "path_rear")


def write_manifest(path, records) -> None:
    lines = ["# " + "\t".join(MANIFEST_FIELDS)]
    for r in records:
        lines.append("\t".join([
            r.utt_id, r.class_label, r.gscd_speaker, r.ha_subject,
            r.set_name, str(r.partition), r.noise_type,
            f"{r.target_snr_db:g}", str(r.seed),
            r.paths["iec"], r.paths["front"], r.paths["rear"],
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> list:
    records = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip() or raw.startswith("#"):
            continue
        parts = raw.split("\t")
        if len(parts) != len(MANIFEST_FIELDS):
            raise DataError(f"manifest line {lineno}: expected "
                            f"{len(MANIFEST_FIELDS)} fields, got {len(parts)}")
        (utt_id, label, speaker, subject, set_name, partition, noise_type,
         snr, seed, p_iec, p_front, p_rear) = parts
        records.append(UtteranceRecord(
            utt_id=utt_id, class_label=label, gscd_speaker=speaker,
            ha_subject=subject, set_name=set_name, partition=int(partition),
            noise_type=noise_type, target_snr_db=float(snr), seed=int(seed),
            paths={"iec": p_iec, "front": p_front, "rear": p_rear},
        ))
    return records
