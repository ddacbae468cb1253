"""Command-line front end.

One executable, eight verbs: dataset synthesis, feature caching, model
training, evaluation, real-time-factor timing, two transfer-function
measurement drills, and multi-run report pooling. Every verb accepts
--seed, --config, and --out. Exit codes: 0 success, 2 configuration
error, 3 data error, 4 training divergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .audio import SAMPLE_RATE, AudioBuffer, convolve, read_wav
from .bcresnet import ModelConfig, build_model
from .dataset import (MANIFEST_NAME, DatasetConfig, load_dataset_config,
                      read_manifest)
from .errors import ConfigError, DataError, DivergenceError
from .experiments import build_synthetic_dataset
from .features import MIC_ORDER, log_mel, write_feature_cache
from .harness import (confidence_interval, evaluate, load_model,
                      load_train_config, measure_rtf, render_report,
                      report_records, train)
from .transfer import (deconvolve_sweep, estimate_ir_lms,
                       generate_exp_sweep, save_ir)


def _read_config(loader, path):
    try:
        return loader(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None


def _parse_mics(text: str) -> tuple:
    names = [m.strip() for m in text.split(",") if m.strip()]
    unknown = [m for m in names if m not in MIC_ORDER]
    if unknown:
        raise ConfigError(f"unknown mic ids {unknown}; "
                          f"choose from {list(MIC_ORDER)}")
    if not names:
        raise ConfigError("mic list is empty")
    return tuple(m for m in MIC_ORDER if m in set(names))


def _require_out(args) -> Path:
    if args.out is None:
        raise ConfigError("this verb requires --out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest_records(data_dir: Path) -> list:
    manifest = data_dir / MANIFEST_NAME
    if not manifest.exists():
        raise DataError(f"missing manifest: {manifest}")
    return read_manifest(manifest)


def _random_decaying_ir(rng: np.random.Generator, taps: int) -> np.ndarray:
    return (rng.standard_normal(taps)
            * np.exp(-np.arange(taps) / max(4.0, taps / 4.0)))


def _misalignment_db(estimate: np.ndarray, truth: np.ndarray) -> float:
    err = float(np.sum((estimate - truth) ** 2))
    return 10.0 * float(np.log10(err / np.sum(truth ** 2)))


def _band_error_db(estimate: np.ndarray, truth: np.ndarray,
                   lo: float = 100.0, hi: float = 7000.0) -> float:
    n = 4096
    freq = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
    band = (freq >= lo) & (freq <= hi)
    te = np.fft.rfft(truth, n)[band]
    ee = np.fft.rfft(estimate, n)[band]
    return 10.0 * float(np.log10(np.sum(np.abs(ee - te) ** 2)
                                 / np.sum(np.abs(te) ** 2)))


# -- verbs --------------------------------------------------------------------

def cmd_synth(args) -> int:
    config = _read_config(load_dataset_config, args.config) \
        if args.config else DatasetConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = replace(config, **overrides)
    out = _require_out(args)
    records = build_synthetic_dataset(config, out)
    print(f"wrote {len(records)} records under {out}")
    return 0


def cmd_features(args) -> int:
    data_dir = Path(args.data)
    records = _manifest_records(data_dir)
    mics = _parse_mics(args.mics)
    out_dir = Path(args.out) if args.out else data_dir / "features"
    count = 0
    for record in records:
        for mic in mics:
            wav = read_wav(data_dir / record.paths[mic])
            target = (out_dir / record.paths[mic]).with_suffix(".lmf")
            target.parent.mkdir(parents=True, exist_ok=True)
            write_feature_cache(target, log_mel(wav))
            count += 1
    print(f"cached {count} feature maps under {out_dir}")
    return 0


def cmd_train(args) -> int:
    if args.config is None:
        raise ConfigError("train requires --config")
    config = _read_config(load_train_config, args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.data is not None:
        overrides["data_dir"] = args.data
    if overrides:
        config = replace(config, **overrides)
    for result in train(config):
        best = "-" if result.best_val_accuracy is None \
            else f"{result.best_val_accuracy:.2f}"
        print(f"seed={result.seed} final={result.final_path} "
              f"best={result.best_path} best_val_acc={best}")
    return 0


def cmd_eval(args) -> int:
    if not args.ckpt:
        raise ConfigError("eval requires at least one --ckpt")
    mics = _parse_mics(args.mics)
    models = [load_model(p) for p in args.ckpt]
    for path, model in zip(args.ckpt, models):
        if model.config.in_channels != len(mics):
            raise ConfigError(
                f"{path} expects {model.config.in_channels} input "
                f"channels, got {len(mics)} mics")
    data_dir = Path(args.data)
    records = [r for r in _manifest_records(data_dir)
               if r.set_name == args.split]
    if not records:
        raise DataError(f"no records in split {args.split!r}")
    report = evaluate(models, records, data_dir, mics,
                      batch_size=args.batch_size)
    text = render_report(report)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text, encoding="utf-8")
        (out / "report.tsv").write_text(report_records(report),
                                        encoding="utf-8")
    return 0


def cmd_rtf(args) -> int:
    seed = 0 if args.seed is None else args.seed
    if args.ckpt:
        model = load_model(args.ckpt)
        mic_count = model.config.in_channels
    else:
        model = build_model(ModelConfig(tau=args.tau,
                                        in_channels=args.mic_count),
                            seed=seed)
        mic_count = args.mic_count
    value = measure_rtf(model, mic_count, trials=args.trials, seed=seed)
    line = f"rtf: {value:.4f}\n"
    print(line, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "rtf.txt").write_text(line, encoding="utf-8")
    return 0


def cmd_estimate_tf(args) -> int:
    """Self-contained identification drill against a known random system."""
    rng = np.random.default_rng(0 if args.seed is None else args.seed)
    truth = _random_decaying_ir(rng, args.taps)
    n = int(round(args.duration * SAMPLE_RATE))
    excitation = AudioBuffer(rng.standard_normal(n), SAMPLE_RATE)
    response = convolve(excitation, truth, out_len=n)
    estimate = estimate_ir_lms(excitation, response, args.taps,
                               step_size=args.step_size,
                               passes=args.passes)
    error = _misalignment_db(estimate.taps, truth)
    print(f"taps: {args.taps}")
    print(f"misalignment: {error:.2f} dB")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_ir(out / "estimated_ir.wav", estimate,
                subject_id="drill", mic_id="iec")
    return 0


def cmd_sweep(args) -> int:
    """Sweep-deconvolution drill against a known random system."""
    rng = np.random.default_rng(0 if args.seed is None else args.seed)
    try:
        sweep, inverse = generate_exp_sweep(args.f_start, args.f_end,
                                            args.duration, SAMPLE_RATE)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    truth = _random_decaying_ir(rng, args.taps)
    recording = convolve(sweep, truth)
    recovered = deconvolve_sweep(recording, inverse, ir_len=args.taps)
    error = _band_error_db(recovered.taps, truth)
    print(f"sweep: {args.f_start:g}-{args.f_end:g} Hz over "
          f"{args.duration:g} s")
    print(f"in-band error: {error:.2f} dB")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_ir(out / "recovered_ir.wav", recovered,
                subject_id="drill", mic_id="front")
    return 0


def cmd_report(args) -> int:
    per_seed = []
    for path in args.inputs:
        path = Path(path)
        if not path.exists():
            raise DataError(f"missing report: {path}")
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.startswith("#") or not line.strip():
                continue
            fields = line.split("\t")
            if fields[0] == "seed":
                per_seed.append(float(fields[3]))
    if not per_seed:
        raise DataError("no per-seed rows in the given reports")
    mean, halfwidth = confidence_interval(per_seed)
    lines = [f"reports: {len(args.inputs)}",
             f"seeds: {len(per_seed)}",
             f"pooled accuracy: {mean:.2f} +/- {halfwidth:.2f} (95% CI)"]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.txt").write_text(text, encoding="utf-8")
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the configured random seed")
    common.add_argument("--config", default=None,
                        help="key=value configuration file")
    common.add_argument("--out", default=None,
                        help="output directory")

    parser = argparse.ArgumentParser(
        prog="hakws",
        description="own-voice keyword-spotting toolkit")
    verbs = parser.add_subparsers(dest="verb", required=True)

    p = verbs.add_parser("synth", parents=[common],
                         help="render a synthetic multi-mic dataset")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel render workers")
    p.set_defaults(func=cmd_synth)

    p = verbs.add_parser("features", parents=[common],
                         help="precompute log-mel feature caches")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--mics", default=",".join(MIC_ORDER),
                   help="comma-separated mic ids")
    p.set_defaults(func=cmd_features)

    p = verbs.add_parser("train", parents=[common],
                         help="train one model per seed")
    p.add_argument("--data", default=None,
                   help="override the configured dataset directory")
    p.set_defaults(func=cmd_train)

    p = verbs.add_parser("eval", parents=[common],
                         help="accuracy breakdown for checkpoints")
    p.add_argument("--ckpt", action="append", default=[],
                   help="model checkpoint (repeatable, one per seed)")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--split", default="test",
                   choices=("train", "val", "test"))
    p.add_argument("--mics", default="iec",
                   help="comma-separated mic ids the models were fed")
    p.add_argument("--batch-size", type=int, default=100)
    p.set_defaults(func=cmd_eval)

    p = verbs.add_parser("rtf", parents=[common],
                         help="real-time factor of feature + forward")
    p.add_argument("--ckpt", default=None,
                   help="time an existing checkpoint")
    p.add_argument("--tau", type=float, default=3.0,
                   help="width multiplier when building a fresh model")
    p.add_argument("--mic-count", type=int, default=1)
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_rtf)

    p = verbs.add_parser("estimate-tf", parents=[common],
                         help="adaptive-filter identification drill")
    p.add_argument("--taps", type=int, default=64)
    p.add_argument("--duration", type=float, default=2.0,
                   help="excitation length in seconds")
    p.add_argument("--step-size", type=float, default=0.5)
    p.add_argument("--passes", type=int, default=2)
    p.set_defaults(func=cmd_estimate_tf)

    p = verbs.add_parser("sweep", parents=[common],
                         help="sweep-deconvolution drill")
    p.add_argument("--f-start", type=float, default=20.0)
    p.add_argument("--f-end", type=float, default=8000.0)
    p.add_argument("--duration", type=float, default=2.0)
    p.add_argument("--taps", type=int, default=128)
    p.set_defaults(func=cmd_sweep)

    p = verbs.add_parser("report", parents=[common],
                         help="pool per-seed rows from eval reports")
    p.add_argument("inputs", nargs="+", help="report.tsv files")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse signals usage errors with 2
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
