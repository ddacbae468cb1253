"""Synthetic stand-ins for the measured assets: clean corpora, subject
transfer-function sets, and noise banks.

Everything here is parametric audio with class structure simple enough to
learn quickly at desk scale but shaped like the real problem: keyword
classes are tone complexes with a fundamental below 2 kHz plus a component
above 2.5 kHz, so a band-limited in-ear path still separates classes while
full-band mics see extra detail.
"""

from __future__ import annotations

import numpy as np

from .audio import SAMPLE_RATE, AudioBuffer
from .dataset import AMBIENT_CLASS, CLASS_LABELS, CleanUtterance
from .scene import NoiseBank
from .transfer import MIC_IDS, NUM_LOUDSPEAKERS, ImpulseResponse, TransferFunctionSet

#: Class fundamentals (Hz): a tight geometric ladder, all below 2 kHz.
#: Neighbors sit about half a mel bin apart, so the low band separates
#: classes only softly, like real keywords under a strong lowpass.
CLASS_FUNDAMENTALS = {
    label: 380.0 * (1.12 ** i)
    for i, label in enumerate(CLASS_LABELS)
    if label != AMBIENT_CLASS
}
#: Upper components (Hz), all above 2.5 kHz, on a coarse grid visited in
#: permuted order so low-band neighbors land far apart up high. These
#: carry most of the class identity and disappear under an in-ear
#: lowpass, which is what makes the microphone comparison meaningful.
CLASS_UPPERS = {
    label: 2600.0 * (1.11 ** ((7 * i) % 11))
    for i, label in enumerate(CLASS_LABELS)
    if label != AMBIENT_CLASS
}


def _burst_envelope(n: int, rng: np.random.Generator) -> np.ndarray:
    """Raised-cosine burst with jittered onset, silence elsewhere."""
    length = int(n * (0.5 + 0.1 * rng.random()))
    start = int(rng.random() * (n - length))
    env = np.zeros(n)
    ramp = np.hanning(length)
    env[start:start + length] = ramp
    return env


def synth_class_utterance(label: str, rng: np.random.Generator,
                          seconds: float = 1.0) -> AudioBuffer:
    """One clean synthetic 'word': class-keyed tone pair under a burst."""
    n = int(round(seconds * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    f0 = CLASS_FUNDAMENTALS[label] * (1.0 + 0.02 * rng.standard_normal())
    f1 = CLASS_UPPERS[label] * (1.0 + 0.02 * rng.standard_normal())
    amp = 0.08 + 0.06 * rng.random()
    phase0, phase1 = 2.0 * np.pi * rng.random(2)
    wave = np.sin(2 * np.pi * f0 * t + phase0) \
        + 0.5 * np.sin(2 * np.pi * f1 * t + phase1)
    return AudioBuffer(amp * wave * _burst_envelope(n, rng), SAMPLE_RATE)


def make_clean_corpus(rng: np.random.Generator, per_class: int,
                      classes=CLASS_LABELS, seconds: float = 1.0,
                      speaker_pool: int = 6,
                      id_prefix: str = "u") -> list:
    """per_class utterances for each requested class, speakers round-robin."""
    utts = []
    for label in classes:
        for k in range(per_class):
            utt_id = f"{id_prefix}_{label}_{k:03d}"
            speaker = f"spk{(len(utts) % speaker_pool):02d}"
            if label == AMBIENT_CLASS:
                utts.append(CleanUtterance(utt_id, label, speaker, None))
            else:
                buf = synth_class_utterance(label, rng, seconds)
                utts.append(CleanUtterance(utt_id, label, speaker, buf))
    return utts


def _decaying_ir(rng: np.random.Generator, ir_len: int,
                 direct: float = 1.0, tail: float = 0.15) -> np.ndarray:
    taps = tail * rng.standard_normal(ir_len) * np.exp(-np.arange(ir_len) / 10.0)
    taps[0] += direct
    return taps


def lowpass_fir(cutoff_hz: float, num_taps: int,
                sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Hamming-windowed sinc lowpass, unit DC gain."""
    m = num_taps - 1
    k = np.arange(num_taps) - m / 2.0
    fc = cutoff_hz / sample_rate
    h = 2.0 * fc * np.sinc(2.0 * fc * k) * np.hamming(num_taps)
    return h / np.sum(h)


def make_synthetic_tf_set(subject_id: str, rng: np.random.Generator,
                          ir_len: int = 64,
                          iec_lowpass_hz: float | None = None,
                          iec_noise_gain: float = 1.0) -> TransferFunctionSet:
    """Random smooth transfer functions for one subject.

    iec_lowpass_hz band-limits the in-ear own-voice path (bone-conduction
    style). iec_noise_gain scales the in-ear noise HRTFs as exact copies of
    the front-mic ones (attenuated, coherent leakage through the ear seal)
    when below 1; at 1.0 the in-ear noise paths are independent draws.
    """
    ovtf = {}
    for mic in MIC_IDS:
        taps = _decaying_ir(rng, ir_len)
        if mic == "iec" and iec_lowpass_hz is not None:
            taps = np.convolve(_decaying_ir(rng, ir_len // 2),
                               lowpass_fir(iec_lowpass_hz, ir_len // 2 + 1))
            taps = taps[:ir_len]
        ovtf[mic] = ImpulseResponse(taps, SAMPLE_RATE, "own_voice")

    hrtf = {}
    for spk in range(1, NUM_LOUDSPEAKERS + 1):
        front = _decaying_ir(rng, ir_len, direct=0.8, tail=0.2)
        rear = _decaying_ir(rng, ir_len, direct=0.8, tail=0.2)
        if iec_noise_gain < 1.0:
            iec = iec_noise_gain * front
        else:
            iec = _decaying_ir(rng, ir_len, direct=0.8, tail=0.2)
        for mic, taps in (("iec", iec), ("front", front), ("rear", rear)):
            hrtf[(spk, mic)] = ImpulseResponse(taps, SAMPLE_RATE, "hrtf")
    return TransferFunctionSet(subject_id, ovtf, hrtf)


def _speech_stream(rng: np.random.Generator, n: int) -> AudioBuffer:
    """Babble-ish stream: lowpass-shaped noise with syllabic modulation."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
    shaped = np.fft.irfft(spec / np.sqrt(1.0 + (freqs / 500.0) ** 2), n)
    t = np.arange(n) / SAMPLE_RATE
    rate = 3.0 + 2.0 * rng.random()
    mod = 0.55 + 0.45 * np.sin(2 * np.pi * rate * t + 2 * np.pi * rng.random())
    x = shaped * mod
    return AudioBuffer(0.1 * x / np.std(x), SAMPLE_RATE)


def _music_pair(rng: np.random.Generator, n: int):
    """Two related harmonic streams standing in for a stereo recording."""
    t = np.arange(n) / SAMPLE_RATE
    root = 110.0 * 2.0 ** rng.integers(0, 3)
    chord = [root, root * 1.25, root * 1.5]
    vib = 1.0 + 0.005 * np.sin(2 * np.pi * 5.0 * t)
    left = sum(np.sin(2 * np.pi * f * vib * t + 2 * np.pi * rng.random())
               for f in chord)
    right = sum(np.sin(2 * np.pi * f * vib * t + 2 * np.pi * rng.random())
                for f in chord[::-1])
    beat = 0.6 + 0.4 * np.square(np.sin(2 * np.pi * 2.0 * t))
    return (AudioBuffer(0.08 * left * beat, SAMPLE_RATE),
            AudioBuffer(0.08 * right * beat, SAMPLE_RATE))


def _tv_stream(rng: np.random.Generator, n: int) -> AudioBuffer:
    """Speech-plus-jingle mixture standing in for television audio."""
    speech = _speech_stream(rng, n).samples
    left, _ = _music_pair(rng, n)
    x = speech + 0.5 * left.samples
    return AudioBuffer(0.1 * x / np.std(x), SAMPLE_RATE)


def speech_shaped_reference(num_points: int = 257) -> np.ndarray:
    """Canonical long-term speech magnitude shape on a 0..8 kHz grid."""
    freqs = np.linspace(0.0, 8000.0, num_points)
    return 1.0 / np.sqrt(1.0 + (freqs / 500.0) ** 2)


def make_noise_bank(rng: np.random.Generator, stream_seconds: float = 2.0,
                    n_talkers: int = 6) -> NoiseBank:
    n = int(round(stream_seconds * SAMPLE_RATE))
    fem = tuple(_speech_stream(rng, n) for _ in range(n_talkers))
    mal = tuple(_speech_stream(rng, n) for _ in range(n_talkers))
    music = tuple(_music_pair(rng, n) for _ in range(3))
    return NoiseBank(
        babble_female=fem, babble_male=mal, music=music,
        speech_spectrum=speech_shaped_reference(),
        interferer_female=tuple(_speech_stream(rng, n) for _ in range(3)),
        interferer_male=tuple(_speech_stream(rng, n) for _ in range(3)),
        tv=tuple(_tv_stream(rng, n) for _ in range(2)),
        ssn_length=n,
    )


def make_noise_banks(seed: int = 0, stream_seconds: float = 2.0) -> dict:
    """Train/val share one bank; test gets independently drawn material."""
    train_bank = make_noise_bank(np.random.default_rng(seed * 2 + 1),
                                 stream_seconds)
    test_bank = make_noise_bank(np.random.default_rng(seed * 2 + 2),
                                stream_seconds)
    return {"train": train_bank, "val": train_bank, "test": test_bank}
