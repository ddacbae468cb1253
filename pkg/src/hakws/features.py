"""Log-Mel feature extraction and multi-microphone channel stacking.

Frames are 30 ms with a 10 ms shift at 16 kHz (480 / 160 samples), Hann
windowed, FFT size 512, 40 triangular mel filters spanning 0..8 kHz on
power spectra, natural log with a 1e-10 floor. No pre-emphasis and no
per-utterance normalization.
"""

from __future__ import annotations

import struct
from functools import lru_cache

import numpy as np

from .audio import AudioBuffer

WINDOW_SAMPLES = 480
HOP_SAMPLES = 160
FFT_SIZE = 512
NUM_MEL_BINS = 40
LOG_FLOOR = 1e-10

#: Canonical channel order when stacking microphone features.
MIC_ORDER = ("iec", "front", "rear")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(num_bins: int = NUM_MEL_BINS, sample_rate: int = 16000,
                   fft_size: int = FFT_SIZE, f_low: float = 0.0,
                   f_high: float | None = None):
    """Triangular mel filterbank matrix (num_bins x fft_size//2+1).

    Filter edges are spaced uniformly on the mel scale; the first filter's
    lower edge sits at f_low and the last filter's upper edge at f_high.
    """
    if f_high is None:
        f_high = sample_rate / 2.0
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(f_low), hz_to_mel(f_high), num_bins + 2))
    fft_freqs = np.arange(fft_size // 2 + 1) * (sample_rate / fft_size)
    fb = np.zeros((num_bins, fft_freqs.size))
    for b in range(num_bins):
        lo, center, hi = edges_hz[b], edges_hz[b + 1], edges_hz[b + 2]
        rising = (fft_freqs - lo) / max(center - lo, 1e-12)
        falling = (hi - fft_freqs) / max(hi - center, 1e-12)
        fb[b] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb, edges_hz


def frame_count(num_samples: int) -> int:
    if num_samples < WINDOW_SAMPLES:
        raise ValueError(f"too-short input: {num_samples} < {WINDOW_SAMPLES} samples")
    return 1 + (num_samples - WINDOW_SAMPLES) // HOP_SAMPLES


def log_mel(signal: AudioBuffer) -> np.ndarray:
    """Single-channel log-mel features, shape (1, 40, T)."""
    if signal.sample_rate != 16000:
        raise ValueError(f"expected 16 kHz input, got {signal.sample_rate}")
    x = signal.samples
    n_frames = frame_count(x.size)
    idx = np.arange(WINDOW_SAMPLES)[None, :] + HOP_SAMPLES * np.arange(n_frames)[:, None]
    frames = x[idx]
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(WINDOW_SAMPLES) / WINDOW_SAMPLES)
    spec = np.fft.rfft(frames * window, FFT_SIZE, axis=1)
    power = spec.real ** 2 + spec.imag ** 2
    fb, _ = mel_filterbank(NUM_MEL_BINS, signal.sample_rate, FFT_SIZE)
    mel_power = power @ fb.T
    feats = np.log(np.maximum(mel_power, LOG_FLOOR))
    return feats.T[None, :, :]


def stack_channels(channel_maps) -> np.ndarray:
    """Stack single-channel feature maps along the channel axis.

    Callers pass maps already in canonical microphone order (iec, front,
    rear) restricted to the mics in use; shapes must agree exactly.
    """
    maps = list(channel_maps)
    if not maps:
        raise ValueError("no channels to stack")
    shapes = {m.shape[-2:] for m in maps}
    if len(shapes) != 1:
        raise ValueError(f"shape mismatch: {sorted(shapes)}")
    return np.concatenate([np.asarray(m) for m in maps], axis=0)


# --- feature cache: flat binary tensor, 16-byte header (magic, C, bins, T) ---

_CACHE_MAGIC = b"LMF1"


def write_feature_cache(path, features: np.ndarray) -> None:
    feats = np.ascontiguousarray(features, dtype="<f4")
    if feats.ndim != 3:
        raise ValueError(f"expected (C, bins, T) features, got shape {feats.shape}")
    c, bins, t = feats.shape
    with open(path, "wb") as f:
        f.write(_CACHE_MAGIC + struct.pack("<III", c, bins, t))
        f.write(feats.tobytes())


def read_feature_cache(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:4] != _CACHE_MAGIC:
            raise ValueError("malformed feature cache header")
        c, bins, t = struct.unpack("<III", header[4:])
        data = np.frombuffer(f.read(4 * c * bins * t), dtype="<f4")
    if data.size != c * bins * t:
        raise ValueError("truncated feature cache")
    return data.reshape(c, bins, t).astype(np.float64)
