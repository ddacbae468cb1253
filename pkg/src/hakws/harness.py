"""Training loop, evaluation with SNR/noise breakdowns, CI, and RTF.

The trainer is deterministic: model init, dropout masks, and batch
shuffles all derive from the run seed, so two runs with the same seed
produce bit-identical checkpoints. Evaluation pools per-cell counts
(accuracy per SNR x seen/unseen noise group) and aggregates per-seed
overall accuracies into a Student-t confidence interval.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import t as student_t

from .audio import SAMPLE_RATE, AudioBuffer, read_wav
from .bcresnet import ModelConfig, build_model
from .dataset import (CLASS_LABELS, LABEL_INDEX, MANIFEST_NAME,
                      SEEN_NOISE_TYPES, UNSEEN_NOISE_TYPES, read_manifest)
from .engine import (SGD, Tensor, load_checkpoint, lr_at_epoch,
                     save_checkpoint, softmax_cross_entropy)
from .errors import ConfigError, DataError, DivergenceError
from .features import MIC_ORDER, log_mel, stack_channels

FINAL_CHECKPOINT = "final.ckpt"
BEST_CHECKPOINT = "best.ckpt"
TRAIN_LOG = "train.log"
_META_PREFIX = "_meta."


@dataclass
class TrainConfig:
    """Flat key=value training configuration."""

    epochs: int = 200
    batch_size: int = 100
    warmup_epochs: int = 5
    peak_lr: float = 0.1
    seeds: tuple = (0, 1, 2, 3, 4)
    mics: tuple = ("iec",)
    tau: float = 1.0
    data_dir: str = ""
    out_dir: str = ""
    classes: tuple = CLASS_LABELS
    momentum: float = 0.9
    weight_decay: float = 1e-3
    dropout_rate: float = 0.1
    deterministic: bool = True

    def __post_init__(self):
        for name in ("epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.warmup_epochs < 0 or self.warmup_epochs >= self.epochs:
            raise ConfigError("warmup_epochs must lie inside [0, epochs)")
        if self.peak_lr <= 0:
            raise ConfigError("peak_lr must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed required")
        bad = [m for m in self.mics if m not in MIC_ORDER]
        if bad or not self.mics:
            raise ConfigError(f"mics must be a non-empty subset of "
                              f"{MIC_ORDER}, got {self.mics}")
        # canonical mic order fixes the channel stacking
        object.__setattr__(self, "mics", tuple(
            m for m in MIC_ORDER if m in set(self.mics)))
        unknown = [c for c in self.classes if c not in CLASS_LABELS]
        if unknown or not self.classes:
            raise ConfigError(f"unknown classes {unknown}")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def _parse_element(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def save_train_config(path, config: TrainConfig) -> None:
    lines = [f"{f.name}={_format_value(getattr(config, f.name))}"
             for f in dataclasses.fields(config)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_train_config(text: str) -> TrainConfig:
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(
                f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
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
                values[key] = tuple(_parse_element(v)
                                    for v in value.split(",")) \
                    if value else ()
            else:
                values[key] = value
        except ValueError:
            raise ConfigError(
                f"line {lineno}: bad value for {key}: {value!r}") from None
    return TrainConfig(**values)


def load_train_config(path) -> TrainConfig:
    return parse_train_config(Path(path).read_text(encoding="utf-8"))


# -- feature assembly --------------------------------------------------------

def record_features(record, data_root, mics) -> np.ndarray:
    """Stacked (len(mics), 40, T) log-mel map for one manifest record."""
    maps = []
    for mic in mics:
        wav = read_wav(Path(data_root) / record.paths[mic])
        maps.append(log_mel(wav))
    return stack_channels(maps)


def load_split(records, data_root, mics):
    """Feature tensor (N, C, 40, T) plus integer labels for a record list."""
    if not records:
        return (np.zeros((0, len(mics), 40, 0), dtype=np.float32),
                np.zeros(0, dtype=np.int64))
    feats = [record_features(r, data_root, mics) for r in records]
    shapes = {f.shape for f in feats}
    if len(shapes) != 1:
        raise DataError(f"inconsistent feature shapes across records: "
                        f"{sorted(shapes)}")
    labels = np.array([LABEL_INDEX[r.class_label] for r in records],
                      dtype=np.int64)
    return np.stack(feats), labels


def _check_class_coverage(records, classes) -> None:
    present = {r.class_label for r in records}
    missing = [c for c in classes if c not in present]
    if missing:
        raise DataError(f"class coverage: training split lacks {missing}")


# -- training -----------------------------------------------------------------

@dataclass
class RunResult:
    seed: int
    final_path: str
    best_path: str
    log_path: str
    epoch_losses: list
    val_accuracies: list
    best_val_accuracy: float | None


def _batched_accuracy(model, features, labels, batch_size) -> float:
    model.eval()
    correct = 0
    for start in range(0, features.shape[0], batch_size):
        chunk = features[start:start + batch_size]
        logits = model(Tensor(chunk)).data
        correct += int((logits.argmax(axis=1)
                        == labels[start:start + batch_size]).sum())
    model.train()
    return 100.0 * correct / max(1, features.shape[0])


def _model_meta(config: TrainConfig) -> dict:
    return {
        _META_PREFIX + "tau": np.asarray(float(config.tau)),
        _META_PREFIX + "in_channels": np.asarray(float(len(config.mics))),
        _META_PREFIX + "dropout_rate": np.asarray(
            float(config.dropout_rate)),
    }


def save_model(path, model, config: TrainConfig) -> None:
    state = dict(model.state_dict())
    state.update(_model_meta(config))
    save_checkpoint(str(path), state)


def load_model(path):
    """Rebuild a model from a checkpoint written by save_model."""
    state = load_checkpoint(str(path))
    meta = {k[len(_META_PREFIX):]: float(v.reshape(()))
            for k, v in state.items() if k.startswith(_META_PREFIX)}
    if "tau" not in meta or "in_channels" not in meta:
        raise DataError("checkpoint lacks model metadata")
    model = build_model(ModelConfig(
        tau=meta["tau"], in_channels=int(meta["in_channels"]),
        dropout_rate=meta.get("dropout_rate", 0.1)))
    model.load_state_dict({k: v for k, v in state.items()
                           if not k.startswith(_META_PREFIX)})
    return model.eval()


def train_single(config: TrainConfig, seed: int, train_data, val_data,
                 out_dir) -> RunResult:
    """One seeded run: returns checkpoint paths and the loss history."""
    features, labels = train_data
    val_features, val_labels = val_data
    n = features.shape[0]
    if n == 0:
        raise DataError("empty training split")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    model = build_model(ModelConfig(
        tau=config.tau, in_channels=len(config.mics),
        dropout_rate=config.dropout_rate), seed=seed)
    optimizer = SGD(model.parameters(), momentum=config.momentum,
                    weight_decay=config.weight_decay)
    shuffle_rng = np.random.default_rng(seed)
    steps_per_epoch = (n + config.batch_size - 1) // config.batch_size

    log_lines = []
    epoch_losses = []
    val_accuracies = []
    best_val = None
    best_path = out_dir / BEST_CHECKPOINT
    final_path = out_dir / FINAL_CHECKPOINT

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        step_losses = []
        for step in range(steps_per_epoch):
            fractional_epoch = epoch + step / steps_per_epoch
            lr = lr_at_epoch(fractional_epoch, total_epochs=config.epochs,
                             warmup_epochs=config.warmup_epochs,
                             peak_lr=config.peak_lr)
            idx = order[step * config.batch_size:
                        (step + 1) * config.batch_size]
            optimizer.zero_grad()
            loss = softmax_cross_entropy(model(Tensor(features[idx])),
                                         labels[idx])
            loss_value = float(loss.data)
            if not np.isfinite(loss_value):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            optimizer.step(lr)
            step_losses.append(loss_value)
            val_text = "-"
            if step == steps_per_epoch - 1 and val_features.shape[0]:
                val_acc = _batched_accuracy(model, val_features, val_labels,
                                            config.batch_size)
                val_accuracies.append(val_acc)
                val_text = f"{val_acc:.4f}"
                if best_val is None or val_acc > best_val:
                    best_val = val_acc
                    save_model(best_path, model, config)
            log_lines.append(f"epoch={epoch} step={step} lr={lr!r} "
                             f"loss={loss_value!r} val_acc={val_text}")
        epoch_losses.append(float(np.mean(step_losses)))

    save_model(final_path, model, config)
    if best_val is None:  # no validation split: best mirrors final
        save_model(best_path, model, config)
    log_path = out_dir / TRAIN_LOG
    log_path.write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    return RunResult(seed=seed, final_path=str(final_path),
                     best_path=str(best_path), log_path=str(log_path),
                     epoch_losses=epoch_losses,
                     val_accuracies=val_accuracies,
                     best_val_accuracy=best_val)


def train(config: TrainConfig, records=None) -> list:
    """Train one model per configured seed; returns a RunResult per seed."""
    if records is None:
        manifest = Path(config.data_dir) / MANIFEST_NAME
        if not manifest.exists():
            raise DataError(f"missing manifest: {manifest}")
        records = read_manifest(manifest)
    train_records = [r for r in records if r.set_name == "train"]
    val_records = [r for r in records if r.set_name == "val"]
    _check_class_coverage(train_records, config.classes)
    train_data = load_split(train_records, config.data_dir, config.mics)
    val_data = load_split(val_records, config.data_dir, config.mics)
    results = []
    for seed in config.seeds:
        run_dir = Path(config.out_dir) / f"seed{int(seed):02d}"
        results.append(train_single(config, int(seed), train_data,
                                    val_data, run_dir))
    return results


# -- evaluation ---------------------------------------------------------------

@dataclass
class EvalReport:
    snrs: tuple
    seen: dict              # snr -> accuracy percent, or None if absent
    unseen: dict
    cell_counts: dict       # (snr, group) -> utterance count
    per_seed: tuple
    mean: float
    ci_halfwidth: float | None
    rtf: float | None = None

    def __post_init__(self):
        for acc in list(self.seen.values()) + list(self.unseen.values()):
            if acc is not None and not 0.0 <= acc <= 100.0:
                raise ValueError(f"accuracy {acc} outside [0, 100]")
        if self.per_seed and not (min(self.per_seed) - 1e-9 <= self.mean
                                  <= max(self.per_seed) + 1e-9):
            raise ValueError("mean outside per-seed range")


def confidence_interval(per_seed_accuracies) -> tuple:
    """(mean, halfwidth) of the 95% Student-t interval."""
    values = np.asarray(per_seed_accuracies, dtype=np.float64)
    n = values.size
    if n < 2:
        raise ConfigError("insufficient seeds")
    mean = float(values.mean())
    spread = float(values.std(ddof=1))
    quantile = float(student_t.ppf(0.975, n - 1))
    return mean, quantile * spread / float(np.sqrt(n))


def _noise_group(noise_type: str) -> str:
    if noise_type in SEEN_NOISE_TYPES:
        return "seen"
    if noise_type in UNSEEN_NOISE_TYPES:
        return "unseen"
    raise DataError(f"unknown noise type {noise_type!r}")


def evaluate(checkpoints, records, data_root, mics,
             batch_size: int = 100, rtf: float | None = None) -> EvalReport:
    """Accuracy per (SNR, seen/unseen) cell pooled over one or more seeds.

    checkpoints: model path(s) or model instance(s). Cells with no
    records are reported as None (absent), never as zero.
    """
    if not isinstance(checkpoints, (list, tuple)):
        checkpoints = [checkpoints]
    if not records:
        raise DataError("no records to evaluate")
    records = list(records)
    features, labels = load_split(records, data_root, mics)

    snrs = tuple(sorted({r.target_snr_db for r in records}))
    correct = {}
    totals = {}
    per_seed = []
    for entry in checkpoints:
        model = load_model(entry) if isinstance(entry, (str, Path)) \
            else entry.eval()
        predictions = np.empty(len(records), dtype=np.int64)
        for start in range(0, len(records), batch_size):
            logits = model(Tensor(features[start:start + batch_size])).data
            predictions[start:start + batch_size] = logits.argmax(axis=1)
        hits = predictions == labels
        per_seed.append(100.0 * float(hits.mean()))
        for record, hit in zip(records, hits):
            key = (record.target_snr_db, _noise_group(record.noise_type))
            correct[key] = correct.get(key, 0) + int(hit)
            totals[key] = totals.get(key, 0) + 1

    def cell(snr, group):
        key = (snr, group)
        if key not in totals:
            return None
        return 100.0 * correct[key] / totals[key]

    mean = float(np.mean(per_seed))
    halfwidth = confidence_interval(per_seed)[1] if len(per_seed) >= 2 \
        else None
    return EvalReport(
        snrs=snrs,
        seen={snr: cell(snr, "seen") for snr in snrs},
        unseen={snr: cell(snr, "unseen") for snr in snrs},
        cell_counts={k: v // len(checkpoints) for k, v in totals.items()},
        per_seed=tuple(per_seed),
        mean=mean,
        ci_halfwidth=halfwidth,
        rtf=rtf,
    )


def render_report(report: EvalReport) -> str:
    """Text table: SNR rows, seen/unseen columns, then the summary."""
    lines = ["snr_db    seen      unseen"]
    for snr in report.snrs:
        row = [f"{snr:+7.1f}"]
        for value in (report.seen[snr], report.unseen[snr]):
            row.append("   --  " if value is None else f"{value:7.2f}")
        lines.append("  ".join(row))
    lines.append("")
    lines.append(f"seeds: {len(report.per_seed)}")
    lines.append("per-seed accuracy: "
                 + ", ".join(f"{a:.2f}" for a in report.per_seed))
    summary = f"mean accuracy: {report.mean:.2f}"
    if report.ci_halfwidth is not None:
        summary += f" +/- {report.ci_halfwidth:.2f} (95% CI)"
    lines.append(summary)
    if report.rtf is not None:
        lines.append(f"rtf: {report.rtf:.4f}")
    return "\n".join(lines) + "\n"


def report_records(report: EvalReport) -> str:
    """Machine-readable TSV mirror of render_report."""
    lines = ["# kind\tsnr_db\tgroup\tvalue\tcount"]
    for snr in report.snrs:
        for group, table in (("seen", report.seen),
                             ("unseen", report.unseen)):
            value = table[snr]
            count = report.cell_counts.get((snr, group), 0)
            text = "absent" if value is None else f"{value:.6f}"
            lines.append(f"cell\t{snr:g}\t{group}\t{text}\t{count}")
    for i, acc in enumerate(report.per_seed):
        lines.append(f"seed\t-\t{i}\t{acc:.6f}\t-")
    lines.append(f"mean\t-\t-\t{report.mean:.6f}\t-")
    if report.ci_halfwidth is not None:
        lines.append(f"ci_halfwidth\t-\t-\t{report.ci_halfwidth:.6f}\t-")
    if report.rtf is not None:
        lines.append(f"rtf\t-\t-\t{report.rtf:.6f}\t-")
    return "\n".join(lines) + "\n"


# -- real-time factor ---------------------------------------------------------

def measure_rtf(model, mic_count: int, trials: int = 20, warmup: int = 5,
                duration_s: float = 1.0, seed: int = 0) -> float:
    """Median (feature extraction + forward) time over input duration."""
    if isinstance(model, (str, Path)):
        model = load_model(model)
    if trials < 10:
        raise ConfigError("trials must be >= 10")
    if duration_s <= 0:
        raise ConfigError("input duration must be positive")
    if mic_count != model.config.in_channels:
        raise ConfigError(f"model expects {model.config.in_channels} "
                          f"input channels, got mic_count={mic_count}")
    model.eval()
    rng = np.random.default_rng(seed)
    samples = int(round(duration_s * SAMPLE_RATE))
    waves = [AudioBuffer(0.1 * rng.standard_normal(samples), SAMPLE_RATE)
             for _ in range(mic_count)]
    elapsed = []
    for trial in range(warmup + trials):
        start = time.perf_counter()
        stacked = stack_channels([log_mel(w) for w in waves])
        model(Tensor(stacked[None]))
        stop = time.perf_counter()
        if trial >= warmup:
            elapsed.append(stop - start)
    median = float(np.median(elapsed))
    resolution = time.get_clock_info("perf_counter").resolution
    if median < 10.0 * resolution:
        raise RuntimeError("timing resolution insufficient")
    return median / duration_s
