"""Transfer-function lab: LMS system identification, exponential-sweep
deconvolution, and the training-time impulse-response perturbation.

Own-voice transfer functions (mouth to each hearing-aid mic) and HRTFs
(each of the 16 loudspeakers to each mic) are both plain FIR impulse
responses; only the bookkeeping differs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .audio import SAMPLE_RATE, AudioBuffer, convolve, read_wav, write_wav
from .errors import ConfigError, DataError, DivergenceError, LowEnergyWarning

MIC_IDS = ("iec", "front", "rear")
NUM_LOUDSPEAKERS = 16

IR_KINDS = ("own_voice", "hrtf")


@dataclass(frozen=True)
class ImpulseResponse:
    """FIR taps plus sample rate and what the filter connects."""

    taps: np.ndarray
    sample_rate: int = SAMPLE_RATE
    kind: str = "own_voice"

    def __post_init__(self):
        arr = np.asarray(self.taps, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError(f"expected non-empty 1-D taps, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite input")
        if self.kind not in IR_KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        object.__setattr__(self, "taps", arr)

    def __len__(self) -> int:
        return self.taps.size


@dataclass(frozen=True)
class TransferFunctionSet:
    """All acoustic paths for one measured subject.

    ovtf: mic id -> own-voice IR. hrtf: (loudspeaker 1..16, mic id) -> IR.
    """

    subject_id: str
    ovtf: dict
    hrtf: dict

    def __post_init__(self):
        missing = [m for m in MIC_IDS if m not in self.ovtf]
        if missing:
            raise ValueError(f"missing own-voice entry for mics {missing}")
        for mic in MIC_IDS:
            for spk in range(1, NUM_LOUDSPEAKERS + 1):
                if (spk, mic) not in self.hrtf:
                    raise ValueError(f"missing HRTF entry for ({spk}, {mic!r})")
        rates = {ir.sample_rate for ir in self.ovtf.values()}
        rates |= {ir.sample_rate for ir in self.hrtf.values()}
        if len(rates) != 1:
            raise ValueError(f"mixed sample rates {sorted(rates)}")

    @property
    def sample_rate(self) -> int:
        return next(iter(self.ovtf.values())).sample_rate


@dataclass(frozen=True)
class PerturbationParams:
    """Per-tap jitter applied to IRs during training-set synthesis.

    Each tap becomes (1 + mult)*tap + add with mult ~ N(0, sigma_mult^2)
    and add ~ N(0, sigma_add^2), drawn independently per tap.
    """

    sigma_mult: float = 0.1
    sigma_add: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.sigma_mult < 0 or self.sigma_add < 0:
            raise ValueError("sigmas must be >= 0")


def perturb_tf(ir: ImpulseResponse, params: PerturbationParams,
               rng: np.random.Generator | None = None) -> ImpulseResponse:
    """Jittered copy of an IR; bit-reproducible given (ir, params, seed).

    When no generator is passed, one is derived from params.seed.
    """
    if rng is None:
        rng = np.random.default_rng(params.seed)
    n = len(ir)
    mult = rng.normal(0.0, params.sigma_mult, n)
    add = rng.normal(0.0, params.sigma_add, n)
    return ImpulseResponse((1.0 + mult) * ir.taps + add, ir.sample_rate, ir.kind)


def estimate_ir_lms(input_sig: AudioBuffer, output_sig: AudioBuffer,
                    taps: int, step_size: float = 0.5,
                    passes: int = 1) -> ImpulseResponse:
    """Identify an FIR system from an input/output pair with normalized LMS.

    step_size is the normalized step (stable in (0, 2)); normalization
    decouples convergence from the input level. Weights are the estimate
    after `passes` sweeps over the pair.
    """
    if len(input_sig) != len(output_sig):
        raise ValueError("input/output length mismatch")
    if input_sig.sample_rate != output_sig.sample_rate:
        raise ValueError("input/output sample rate mismatch")
    if taps < 1 or taps > len(input_sig):
        raise ConfigError(f"taps {taps} outside [1, {len(input_sig)}]")
    if step_size <= 0:
        raise ConfigError(f"step size must be positive, got {step_size}")
    x = input_sig.samples
    d = output_sig.samples
    if float(np.sum(x * x)) == 0.0:
        raise DataError("insufficient excitation")

    # Row n of windows holds x[n-taps+1 .. n] (zero-padded history), so the
    # converged weights come out time-reversed; undo that at the end.
    padded = np.concatenate([np.zeros(taps - 1), x])
    windows = np.lib.stride_tricks.sliding_window_view(padded, taps)
    energy = np.convolve(x * x, np.ones(taps))[:x.size] + 1e-12
    gains = (step_size / energy).tolist()
    desired = d.tolist()

    w = np.zeros(taps)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max(1, passes)):
            for n in range(x.size):
                u = windows[n]
                err = desired[n] - float(w @ u)
                if not math.isfinite(err):
                    raise DivergenceError("step size too large")
                w += (gains[n] * err) * u
            if float(np.max(np.abs(w))) > 1e12:
                raise DivergenceError("step size too large")
    return ImpulseResponse(w[::-1].copy(), input_sig.sample_rate)


def generate_exp_sweep(f_start: float, f_end: float, duration: float,
                       sample_rate: int = SAMPLE_RATE):
    """Exponential sine sweep and its inverse filter.

    The inverse is the time-reversed sweep with a -6 dB/octave amplitude
    ramp, scaled so the self-deconvolution convolve(sweep, inverse) peaks
    at 1.0 at index len(sweep)-1.
    """
    if not 0 < f_start < f_end <= sample_rate / 2:
        raise ValueError(
            f"need 0 < f_start < f_end <= Nyquist, got {f_start}..{f_end}"
        )
    n = int(round(duration * sample_rate))
    if n < 2:
        raise ValueError("sweep too short")
    t = np.arange(n) / sample_rate
    rate_len = duration / np.log(f_end / f_start)
    phase = 2.0 * np.pi * f_start * rate_len * (np.exp(t / rate_len) - 1.0)
    sweep = np.sin(phase)
    # Energy compensation: later (higher-frequency) portions of the sweep
    # dwell for less time per octave, so the reversed copy is weighted down
    # exponentially toward its own late (low-frequency) end.
    envelope = np.exp(-t / rate_len)
    inverse = sweep[::-1] * envelope
    peak = float(np.sum(sweep * sweep * envelope[::-1]))  # conv value at lag n-1
    inverse /= peak
    return (AudioBuffer(sweep, sample_rate), AudioBuffer(inverse, sample_rate))


def deconvolve_sweep(recording: AudioBuffer, inverse_filter: AudioBuffer,
                     ir_len: int, kind: str = "hrtf") -> ImpulseResponse:
    """Recover an IR from a sweep recording via the inverse filter.

    The zero-lag index of the deconvolution is len(inverse_filter)-1 by
    construction, so taps are read from there; no argmax hunting, which
    would misplace IRs whose largest tap is not the first.
    """
    if recording.sample_rate != inverse_filter.sample_rate:
        raise ValueError("sample rate mismatch")
    full = convolve(recording, inverse_filter.samples)
    onset = len(inverse_filter) - 1
    if onset + ir_len > len(full):
        raise ValueError(f"ir_len {ir_len} exceeds deconvolved support")
    taps = full.samples[onset:onset + ir_len]
    if float(np.max(np.abs(recording.samples), initial=0.0)) < 1e-12:
        warnings.warn("low energy recording", LowEnergyWarning)
        return ImpulseResponse(np.zeros(ir_len), recording.sample_rate, kind)
    return ImpulseResponse(taps, recording.sample_rate, kind)


# --- IR persistence: 32-bit float WAV + structured-text sidecar ------------


def _sidecar_path(wav_path):
    return str(wav_path) + ".meta"


def save_ir(wav_path, ir: ImpulseResponse, subject_id: str, mic_id: str,
            loudspeaker: int | None = None) -> None:
    if mic_id not in MIC_IDS:
        raise ValueError(f"unknown mic id {mic_id!r}")
    write_wav(wav_path, AudioBuffer(ir.taps, ir.sample_rate), bit_depth=32)
    lines = [
        f"subject_id={subject_id}",
        f"mic_id={mic_id}",
        f"loudspeaker={'' if loudspeaker is None else loudspeaker}",
        f"kind={ir.kind}",
    ]
    with open(_sidecar_path(wav_path), "w") as f:
        f.write("\n".join(lines) + "\n")


def load_ir(wav_path):
    """Returns (ImpulseResponse, metadata dict)."""
    buf = read_wav(wav_path)
    meta = {}
    try:
        with open(_sidecar_path(wav_path)) as f:
            for line in f:
                line = line.strip()
                if line and "=" in line:
                    key, _, value = line.partition("=")
                    meta[key] = value
    except FileNotFoundError:
        raise DataError(f"missing IR sidecar for {wav_path}") from None
    kind = meta.get("kind", "hrtf")
    ls = meta.get("loudspeaker", "")
    meta["loudspeaker"] = int(ls) if ls else None
    return ImpulseResponse(buf.samples, buf.sample_rate, kind), meta
