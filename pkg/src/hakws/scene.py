"""Acoustic scene synthesis: the own-voice-plus-scaled-noise mixing model.

A scenario is a set of noise sources pinned to loudspeakers around the
subject. Rendering drives each source through the loudspeaker-to-mic IR,
sums at the mic, and the mixer scales the sum so the front-mic SNR (active
speech level of the filtered own voice vs noise RMS) hits the target. The
scale factor is shared by all three mics; only the front mic defines it.
"""

from __future__ import annotations

import types
from dataclasses import dataclass

import numpy as np

from .audio import (
    SILENCE_DB,
    AudioBuffer,
    active_speech_level,
    convolve,
    rms_level_db,
)
from .errors import DataError
from .transfer import MIC_IDS, NUM_LOUDSPEAKERS, PerturbationParams, perturb_tf

NOISE_TYPES = ("babble", "music", "ssn", "interferer", "tv")

#: Loudspeaker index of the ring position directly ahead of the subject.
ZERO_AZIMUTH_SPEAKER = 1

#: Nominal calibration level for records that carry no own voice, so their
#: noise level matches speech-bearing records at the same nominal SNR.
NOMINAL_SPEECH_ASL_DB = -26.0

#: Frame length for the a-posteriori SNR estimate (30 ms at 16 kHz).
APSNR_FRAME = 480
APSNR_CAP_DB = 100.0
APSNR_FLOOR_DECILE = 0.1
APSNR_ACTIVE_FACTOR = 10.0


def a_posteriori_snr(signal: AudioBuffer) -> float:
    """Blind SNR estimate used to filter noisy source recordings.

    Non-overlapping 30 ms frame energies; the noise floor is the mean of
    the lowest-decile frames, active frames are those above 10x the floor.
    Capped at +100 dB; all-silence yields the silence sentinel.
    """
    x = signal.samples
    if x.size < int(0.2 * signal.sample_rate):
        raise ValueError("input shorter than 0.2 s")
    n_frames = x.size // APSNR_FRAME
    energies = np.mean(
        x[:n_frames * APSNR_FRAME].reshape(n_frames, APSNR_FRAME) ** 2, axis=1
    )
    if not energies.any():
        return SILENCE_DB
    order = np.sort(energies)
    k = max(1, int(np.ceil(APSNR_FLOOR_DECILE * n_frames)))
    floor = float(np.mean(order[:k]))
    if floor == 0.0:
        return APSNR_CAP_DB
    active = energies[energies > APSNR_ACTIVE_FACTOR * floor]
    if active.size == 0:
        active = energies
    return min(APSNR_CAP_DB, 10.0 * np.log10(float(np.mean(active)) / floor))


@dataclass(frozen=True)
class NoiseScenario:
    """Noise sources pinned to loudspeakers, with per-source segment cuts.

    offset_fractions fix where each source's segment starts (as a fraction
    of the legal range) so every mic renders the identical segment and
    rendering stays deterministic without carrying RNG state.
    """

    noise_type: str
    sources: tuple  # of (AudioBuffer, loudspeaker index)
    offset_fractions: tuple

    def __post_init__(self):
        if self.noise_type not in NOISE_TYPES:
            raise ValueError(f"unknown noise type {self.noise_type!r}")
        n = len(self.sources)
        if not 1 <= n <= NUM_LOUDSPEAKERS:
            raise ValueError(f"source count {n} outside [1, {NUM_LOUDSPEAKERS}]")
        if len(self.offset_fractions) != n:
            raise ValueError("offset_fractions length mismatch")
        speakers = [spk for _, spk in self.sources]
        if not all(1 <= spk <= NUM_LOUDSPEAKERS for spk in speakers):
            raise ValueError(f"loudspeaker index outside 1..{NUM_LOUDSPEAKERS}")
        expected = {"babble": 10, "music": 2, "ssn": 16, "interferer": 1, "tv": 1}
        if n != expected[self.noise_type]:
            raise ValueError(
                f"{self.noise_type} needs {expected[self.noise_type]} sources, got {n}"
            )

    @property
    def num_sources(self) -> int:
        return len(self.sources)


@dataclass(frozen=True)
class MixSpec:
    """Resolved mixing parameters for one record."""

    target_snr_db: float
    alpha: float
    perturb: bool

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


@dataclass(frozen=True)
class NoiseBank:
    """Noise source material for one dataset side (train+val or test).

    Keeping the banks side-specific enforces the material split between
    training and test noise.
    """

    babble_female: tuple = ()
    babble_male: tuple = ()
    music: tuple = ()  # of (left: AudioBuffer, right: AudioBuffer)
    speech_spectrum: np.ndarray | None = None
    interferer_female: tuple = ()
    interferer_male: tuple = ()
    tv: tuple = ()
    ssn_length: int = 32000


def compose_scenario(noise_type: str, bank: NoiseBank,
                     rng: np.random.Generator) -> NoiseScenario:
    """Draw a concrete scenario of the given type from the bank."""
    if noise_type == "babble":
        if len(bank.babble_female) < 5 or len(bank.babble_male) < 5:
            raise DataError("insufficient bank material for babble")
        fem = [bank.babble_female[i]
               for i in rng.choice(len(bank.babble_female), 5, replace=False)]
        mal = [bank.babble_male[i]
               for i in rng.choice(len(bank.babble_male), 5, replace=False)]
        speakers = rng.choice(NUM_LOUDSPEAKERS, 10, replace=False) + 1
        sources = tuple(zip(fem + mal, speakers.tolist()))
    elif noise_type == "music":
        if not bank.music:
            raise DataError("insufficient bank material for music")
        left, right = bank.music[int(rng.integers(len(bank.music)))]
        first = int(rng.integers(1, NUM_LOUDSPEAKERS + 1))
        second = first % NUM_LOUDSPEAKERS + 1  # ring-adjacent
        sources = ((left, first), (right, second))
    elif noise_type == "ssn":
        if bank.speech_spectrum is None:
            raise DataError("insufficient bank material for ssn")
        sources = tuple(
            (make_ssn(bank.speech_spectrum, bank.ssn_length, rng), spk)
            for spk in range(1, NUM_LOUDSPEAKERS + 1)
        )
    elif noise_type == "interferer":
        pool = bank.interferer_female if rng.random() < 0.5 else bank.interferer_male
        if not pool:
            raise DataError("insufficient bank material for interferer")
        sig = pool[int(rng.integers(len(pool)))]
        sources = ((sig, int(rng.integers(1, NUM_LOUDSPEAKERS + 1))),)
    elif noise_type == "tv":
        if not bank.tv:
            raise DataError("insufficient bank material for tv")
        sig = bank.tv[int(rng.integers(len(bank.tv)))]
        sources = ((sig, ZERO_AZIMUTH_SPEAKER),)
    else:
        raise ValueError(f"unknown noise type {noise_type!r}")
    fractions = tuple(rng.random(len(sources)).tolist())
    return NoiseScenario(noise_type, sources, fractions)


def _cut_segment(sig: AudioBuffer, fraction: float, length: int) -> np.ndarray:
    if len(sig) < length:
        raise DataError(f"noise source shorter than {length} samples")
    span = len(sig) - length
    off = min(int(fraction * (span + 1)), span)
    return sig.samples[off:off + length]


def render_noise_at_mic(scenario: NoiseScenario, tfs, mic_id: str,
                        length: int) -> AudioBuffer:
    """Unscaled noise sum at one mic: each source segment through its
    loudspeaker-to-mic IR, truncated to length."""
    if mic_id not in MIC_IDS:
        raise ValueError(f"unknown mic id {mic_id!r}")
    total = np.zeros(length)
    for (sig, spk), frac in zip(scenario.sources, scenario.offset_fractions):
        try:
            ir = tfs.hrtf[(spk, mic_id)]
        except KeyError:
            raise DataError(f"missing HRTF entry ({spk}, {mic_id!r})") from None
        seg = _cut_segment(sig, frac, length)
        total += convolve(AudioBuffer(seg, sig.sample_rate), ir.taps,
                          out_len=length).samples
    return AudioBuffer(total, scenario.sources[0][0].sample_rate)


def compute_alpha(x_front_clean: AudioBuffer, noise_front_unscaled: AudioBuffer,
                  target_snr_db: float) -> float:
    """Noise scale so that front-mic (ASL of speech minus noise RMS) equals
    the target SNR; an arithmetic identity, so the round-trip is exact."""
    asl = active_speech_level(x_front_clean)
    nl = rms_level_db(noise_front_unscaled)
    if asl == SILENCE_DB or nl == SILENCE_DB:
        raise DataError("silence: cannot calibrate SNR")
    return 10.0 ** ((asl - nl - target_snr_db) / 20.0)


@dataclass(frozen=True)
class SynthesisResult:
    """Per-mic mixtures plus the separated components that formed them."""

    mixes: dict
    own_voice: dict
    noise_unscaled: dict
    alpha: float
    target_snr_db: float
    perturbed: bool

    def __getitem__(self, mic_id: str) -> AudioBuffer:
        return self.mixes[mic_id]

    def keys(self):
        return self.mixes.keys()


def synthesize_utterance(x: AudioBuffer, tfs, scenario: NoiseScenario,
                         target_snr_db: float, perturb: bool,
                         rng: np.random.Generator,
                         perturbation: PerturbationParams | None = None,
                         nominal_asl_db: float | None = None,
                         alpha_override: float | None = None) -> SynthesisResult:
    """Render one utterance through the full mixing model.

    Own voice goes through the (optionally per-utterance perturbed) OVTF of
    each mic; the scenario renders through (same treatment) HRTFs; one alpha
    is fixed at the front mic and applied everywhere. A silent x (records
    with no own voice) calibrates against nominal_asl_db instead.
    """
    if x.sample_rate != 16000:
        raise ValueError(f"expected 16 kHz input, got {x.sample_rate}")
    length = len(x)
    if length == 0:
        raise ValueError("empty operand")
    if perturbation is None:
        perturbation = PerturbationParams()

    def maybe_perturb(ir):
        return perturb_tf(ir, perturbation, rng) if perturb else ir

    # Draw order is fixed: per mic, own-voice IR first, then the scenario's
    # HRTFs in source order. Renders are reproducible given the rng state.
    own = {}
    noise = {}
    for mic in MIC_IDS:
        h = maybe_perturb(tfs.ovtf[mic])
        own[mic] = convolve(x, h.taps, out_len=length)
        hrtf_view = dict(tfs.hrtf)
        for _, spk in scenario.sources:
            hrtf_view[(spk, mic)] = maybe_perturb(tfs.hrtf[(spk, mic)])
        shim = types.SimpleNamespace(hrtf=hrtf_view)
        noise[mic] = render_noise_at_mic(scenario, shim, mic, length)

    if alpha_override is not None:
        alpha = float(alpha_override)
    else:
        front_asl = active_speech_level(own["front"])
        if front_asl == SILENCE_DB:
            if nominal_asl_db is None:
                raise DataError("silence: cannot calibrate SNR")
            nl = rms_level_db(noise["front"])
            if nl == SILENCE_DB:
                raise DataError("silence: cannot calibrate SNR")
            alpha = 10.0 ** ((nominal_asl_db - nl - target_snr_db) / 20.0)
        else:
            alpha = compute_alpha(own["front"], noise["front"], target_snr_db)

    mixes = {
        mic: AudioBuffer(own[mic].samples + alpha * noise[mic].samples, 16000)
        for mic in MIC_IDS
    }
    return SynthesisResult(mixes, own, noise, alpha, target_snr_db, perturb)


def make_ssn(reference_spectrum, length: int,
             rng: np.random.Generator) -> AudioBuffer:
    """Speech-shaped noise: white Gaussian noise spectrally shaped to a
    reference long-term magnitude spectrum (uniform grid over 0..8 kHz),
    normalized to unit RMS."""
    ref = np.asarray(reference_spectrum, dtype=np.float64)
    if ref.ndim != 1 or ref.size < 2 or not np.all(np.isfinite(ref)) \
            or np.all(ref == 0) or np.any(ref < 0):
        raise ValueError("degenerate spectrum")
    white = rng.standard_normal(length)
    spec = np.fft.rfft(white)
    grid = np.linspace(0.0, 1.0, ref.size)
    target = np.interp(np.linspace(0.0, 1.0, spec.size), grid, ref)
    shaped = np.fft.irfft(spec * target, length)
    rms = float(np.sqrt(np.mean(shaped ** 2)))
    if rms == 0.0:
        raise ValueError("degenerate spectrum")
    return AudioBuffer(shaped / rms, 16000)


def average_speech_spectrum(utterances, nfft: int = 512) -> np.ndarray:
    """Long-term average magnitude spectrum over a set of buffers, on the
    uniform rfft grid (nfft//2+1 points spanning 0..Nyquist)."""
    acc = np.zeros(nfft // 2 + 1)
    frames = 0
    for u in utterances:
        x = u.samples
        n = x.size // nfft
        if n == 0:
            continue
        segs = x[:n * nfft].reshape(n, nfft)
        acc += np.sum(np.abs(np.fft.rfft(segs, axis=1)) ** 2, axis=0)
        frames += n
    if frames == 0 or not acc.any():
        raise ValueError("degenerate spectrum")
    return np.sqrt(acc / frames)
