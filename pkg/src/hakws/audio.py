"""Sample-domain primitives: buffers, WAV I/O, convolution, level meters.

Everything here is a pure function over immutable inputs; buffers are
treated as read-only once constructed. The canonical sample rate for the
whole toolkit is 16 kHz.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

SAMPLE_RATE = 16000

#: Distinguished level value for signals with no energy. Pipelines branch on
#: it instead of catching exceptions.
SILENCE_DB = float("-inf")

# Active-speech-level meter constants (Method B style measurement).
ASL_ENVELOPE_TC_S = 0.2
ASL_HANGOVER_S = 0.2
ASL_MARGIN_DB = 15.9


@dataclass(frozen=True)
class AudioBuffer:
    """Mono sample sequence plus its sample rate.

    Samples are dimensionless amplitudes with full scale at 1.0; values
    outside [-1, 1] are legal (mixing can overshoot) but must be finite.
    """

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"expected mono 1-D samples, got shape {arr.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("non-finite input")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def scaled(self, gain: float) -> "AudioBuffer":
        return AudioBuffer(self.samples * gain, self.sample_rate)


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def _ola_convolve(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Full linear convolution via overlap-add with power-of-two FFT blocks."""
    n, m = x.size, h.size
    out_len = n + m - 1
    if min(n, m) <= 32:
        return np.convolve(x, h)
    nfft = _next_pow2(max(4 * m, 4096))
    block = nfft - (m - 1)
    hf = np.fft.rfft(h, nfft)
    out = np.zeros(out_len + nfft)
    for start in range(0, n, block):
        seg = x[start:start + block]
        out[start:start + nfft] += np.fft.irfft(np.fft.rfft(seg, nfft) * hf, nfft)
    return out[:out_len]


def convolve(signal: AudioBuffer, ir, out_len: int | None = None) -> AudioBuffer:
    """Convolve a buffer with an impulse response, truncated to out_len.

    Returns the first out_len samples of the full linear convolution
    (default: all of it). Filtering call sites pass out_len = input length
    to keep utterances fixed-size.
    """
    h = np.asarray(ir, dtype=np.float64)
    x = signal.samples
    if x.size == 0 or h.size == 0:
        raise ValueError("empty operand")
    if not np.all(np.isfinite(h)):
        raise ValueError("non-finite input")
    full_len = x.size + h.size - 1
    if out_len is None:
        out_len = full_len
    if not 0 < out_len <= full_len:
        raise ValueError(f"out_len {out_len} outside (0, {full_len}]")
    return AudioBuffer(_ola_convolve(x, h)[:out_len], signal.sample_rate)


def rms_level_db(signal: AudioBuffer) -> float:
    """10*log10 of the mean squared sample value; SILENCE_DB when all-zero."""
    x = signal.samples
    if x.size == 0:
        raise ValueError("empty operand")
    power = float(np.mean(x * x))
    if power == 0.0:
        return SILENCE_DB
    return 10.0 * np.log10(power)


def _activity_count(envelope: np.ndarray, threshold: float, hangover: int) -> int:
    """Samples where the envelope exceeds threshold, extended by hangover."""
    above = envelope >= threshold
    if not above.any():
        return 0
    idx = np.arange(envelope.size)
    last_above = np.maximum.accumulate(np.where(above, idx, -1))
    active = (last_above >= 0) & (idx - last_above <= hangover)
    return int(active.sum())


def _asl_envelope(signal: AudioBuffer) -> np.ndarray:
    """Double-exponential envelope of |x|, primed at the opening short-term
    mean level. Zero initial state would leave a startup dead zone roughly
    one time constant long, biasing the level of short always-active
    signals; priming removes it and stays linear in the input."""
    x = np.abs(signal.samples)
    g = np.exp(-1.0 / (signal.sample_rate * ASL_ENVELOPE_TC_S))
    head = max(1, int(round(signal.sample_rate * ASL_ENVELOPE_TC_S)))
    prime = g * float(np.mean(x[:head]))
    p, _ = lfilter([1.0 - g], [1.0, -g], x, zi=np.array([prime]))
    q, _ = lfilter([1.0 - g], [1.0, -g], p, zi=np.array([prime]))
    return q


def active_speech_level(signal: AudioBuffer) -> float:
    """Active speech level in dBFS, Method-B style.

    A double-exponential envelope (0.2 s time constant) tracks |x|; activity
    at a candidate threshold includes a 0.2 s hangover. The reported level is
    the energy over the active samples at the threshold where the margin
    between level and threshold equals 15.9 dB. The margin is not monotone
    in the threshold (near the envelope peak the active count collapses and
    it swings positive again), so we take the first crossing from the low
    side: a coarse 6 dB scan to bracket it, then bisection inside the
    bracket. Candidate thresholds are defined relative to the envelope peak,
    which keeps the meter scale-equivariant. All-zero input yields
    SILENCE_DB.
    """
    x = signal.samples
    if x.size == 0:
        raise ValueError("empty operand")
    sq = float(np.sum(x * x))
    if sq == 0.0:
        return SILENCE_DB

    q = _asl_envelope(signal)
    hangover = int(round(ASL_HANGOVER_S * signal.sample_rate))
    peak = float(q.max())

    def level_at(c: float) -> float:
        a = _activity_count(q, c, hangover)
        return 10.0 * np.log10(sq / a) if a else np.inf

    def margin(c: float) -> float:
        lv = level_at(c)
        return -np.inf if lv == np.inf else lv - 20.0 * np.log10(c) - ASL_MARGIN_DB

    # 6 dB ladder downward from the peak; 60 rungs cover a 361 dB range.
    ladder = [peak * 2.0 ** (-k) for k in range(60, -1, -1)]
    if margin(ladder[0]) <= 0.0:
        return rms_level_db(signal)
    lo = ladder[0]
    hi = None
    for c in ladder[1:]:
        if margin(c) <= 0.0:
            hi = c
            break
        lo = c
    if hi is None:
        # Margin never closes even at the peak threshold: an isolated spike.
        # Report the level over the peak's own active region.
        return level_at(peak)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if margin(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return level_at(lo)


def active_mask(signal: AudioBuffer) -> np.ndarray:
    """Boolean per-sample activity mask at the level reported by
    active_speech_level (same envelope, threshold 15.9 dB below the level)."""
    asl = active_speech_level(signal)
    if asl == SILENCE_DB:
        return np.zeros(len(signal), dtype=bool)
    q = _asl_envelope(signal)
    threshold = 10.0 ** ((asl - ASL_MARGIN_DB) / 20.0)
    hangover = int(round(ASL_HANGOVER_S * signal.sample_rate))
    above = q >= threshold
    idx = np.arange(q.size)
    last_above = np.maximum.accumulate(np.where(above, idx, -1))
    return (last_above >= 0) & (idx - last_above <= hangover)


# --- WAV (RIFF) I/O: mono, 16-bit PCM or 32-bit IEEE float, little-endian ---

_PCM16_SCALE = 32767.0


def write_wav(path, signal: AudioBuffer, bit_depth: int = 32) -> None:
    """Write a mono RIFF WAV file, 16-bit PCM or 32-bit IEEE float."""
    if bit_depth == 16:
        fmt_tag, payload = 1, np.clip(
            np.round(signal.samples * _PCM16_SCALE), -32768, 32767
        ).astype("<i2").tobytes()
    elif bit_depth == 32:
        fmt_tag, payload = 3, signal.samples.astype("<f4").tobytes()
    else:
        raise ValueError(f"unsupported bit depth {bit_depth}")
    block_align = bit_depth // 8
    byte_rate = signal.sample_rate * block_align
    fmt = struct.pack(
        "<HHIIHH", fmt_tag, 1, signal.sample_rate, byte_rate, block_align, bit_depth
    )
    with open(path, "wb") as f:
        f.write(b"RIFF")
        f.write(struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(payload)))
        f.write(b"WAVE")
        f.write(b"fmt " + struct.pack("<I", len(fmt)) + fmt)
        f.write(b"data" + struct.pack("<I", len(payload)) + payload)


def read_wav(path) -> AudioBuffer:
    """Read a mono RIFF WAV file written by write_wav (or compatible)."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise ValueError("malformed header")
    pos = 12
    fmt_chunk = data = None
    while pos + 8 <= len(blob):
        cid = blob[pos:pos + 4]
        (size,) = struct.unpack("<I", blob[pos + 4:pos + 8])
        body = blob[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            fmt_chunk = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt_chunk is None or data is None or len(fmt_chunk) < 16:
        raise ValueError("malformed header")
    fmt_tag, channels, rate, _, _, bits = struct.unpack("<HHIIHH", fmt_chunk[:16])
    if channels != 1:
        raise ValueError("unsupported channel count")
    if fmt_tag == 1 and bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / _PCM16_SCALE
    elif fmt_tag == 3 and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise ValueError(f"unsupported format (tag {fmt_tag}, {bits}-bit)")
    return AudioBuffer(samples, rate)
