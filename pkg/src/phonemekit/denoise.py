"""Noise-fingerprint spectral subtraction and energy-based CV segmentation.

The reduction follows the fingerprint-then-subtract workflow: pick the
quietest frames as the noise region, estimate a per-bin magnitude profile
from them, subtract it from every frame, and repeat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioClip
from .dsp import ComplexFrames, Spectrogram, StftParams, istft, power_spectrogram, stft
from .errors import InsufficientInputError, NoSpeechError, ParameterError

SPAN_KINDS = ("silence", "consonant", "vowel")


@dataclass(frozen=True)
class NoiseProfile:
    mean_mag: np.ndarray
    std_mag: np.ndarray
    params: StftParams


@dataclass(frozen=True)
class SegmentSpan:
    start: int
    end: int
    kind: str

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ParameterError(f"invalid span [{self.start}, {self.end})")
        if self.kind not in SPAN_KINDS:
            raise ParameterError(f"unknown span kind {self.kind!r}")

    def __len__(self):
        return self.end - self.start


def frame_energies(spec: Spectrogram) -> np.ndarray:
    """Total power per frame."""
    return spec.power.sum(axis=1)


def auto_select_noise_frames(spec: Spectrogram, fraction: float = 0.1) -> np.ndarray:
    """Indices (ascending) of the ``ceil(fraction * F)`` lowest-energy frames.

    Ties go to the lower frame index.
    """
    n = spec.power.shape[0]
    if n < 4:
        raise InsufficientInputError(f"need at least 4 frames, got {n}")
    if not 0.0 < fraction < 1.0:
        raise ParameterError("fraction must lie in (0, 1)")
    count = math.ceil(fraction * n)
    order = np.argsort(frame_energies(spec), kind="stable")
    return np.sort(order[:count])


def estimate_noise_profile(frames: ComplexFrames, indices) -> NoiseProfile:
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    X = np.asarray(frames.frames)
    if idx.size == 0:
        raise ParameterError("noise index set is empty")
    if idx.min() < 0 or idx.max() >= X.shape[0]:
        raise ParameterError("noise frame index out of range")
    mag = np.abs(X[idx])
    return NoiseProfile(mag.mean(axis=0), mag.std(axis=0), frames.params)


def spectral_subtract(frames: ComplexFrames, profile: NoiseProfile,
                      alpha: float = 2.0, beta: float = 0.02) -> ComplexFrames:
    """Per bin ``|X'| = max(|X| - alpha*mean, beta*mean)`` with the phase kept."""
    if alpha < 1.0:
        raise ParameterError("alpha must be >= 1")
    if not 0.0 < beta < 1.0:
        raise ParameterError("beta must lie in (0, 1)")
    X = np.asarray(frames.frames)
    if X.shape[1] != profile.mean_mag.shape[0]:
        raise ParameterError(f"frames have {X.shape[1]} bins, profile has {profile.mean_mag.shape[0]}")
    mag = np.abs(X)
    new_mag = np.maximum(mag - alpha * profile.mean_mag, beta * profile.mean_mag)
    # angle() rather than X/|X|: the division overflows for subnormal magnitudes
    return frames.with_frames(new_mag * np.exp(1j * np.angle(X)))


def denoise(clip: AudioClip, passes: int = 2, alpha: float = 2.0, beta: float = 0.02,
            fraction: float = 0.1, params: StftParams = StftParams()) -> AudioClip:
    """Iterated fingerprint subtraction; the output has the input's length.

    The clip is reflect-padded by one window on each side (and up to a whole
    hop at the end) so every original sample sits in the fully overlapped
    interior of the synthesis.
    """
    if passes < 0:
        raise ParameterError("passes must be >= 0")
    x = clip.samples
    if x.size < 4 * params.window_len:
        raise InsufficientInputError("denoise needs at least four windows of audio")
    pad = params.window_len
    body = x.size + 2 * pad
    extra = (-(body - params.window_len)) % params.hop
    xp = np.pad(x, (pad, pad + extra), mode="reflect")
    frames = stft(AudioClip(xp, clip.sample_rate), params)
    for _ in range(passes):
        noise = auto_select_noise_frames(power_spectrogram(frames), fraction)
        frames = spectral_subtract(frames, estimate_noise_profile(frames, noise), alpha, beta)
    y = istft(frames).samples[pad:pad + x.size]
    return AudioClip(y, clip.sample_rate, clip.source)


def dynamic_threshold(frame_energies, noise_indices, k: float = 3.0) -> float:
    """``mean + k * std`` of the energies at ``noise_indices`` (population std)."""
    e = np.asarray(frame_energies, dtype=np.float64)
    idx = np.asarray(noise_indices, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        raise ParameterError("noise index set is empty")
    noise = e[idx]
    return float(noise.mean() + k * noise.std())


def _runs(mask):
    """(start, stop) pairs of consecutive True runs, stop exclusive."""
    m = np.concatenate([[False], np.asarray(mask, dtype=bool), [False]])
    d = np.diff(m.astype(np.int8))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def noise_region(spec: Spectrogram, fraction: float = 0.1, spread_db: float = 3.0) -> np.ndarray:
    """Quietest ``fraction`` of frames plus every frame within ``spread_db``
    of their mean energy.

    The quietest decile alone under-represents the spread of a stationary
    noise floor, which would put a mean + k*std threshold inside the noise.
    """
    seed = auto_select_noise_frames(spec, fraction)
    energy = frame_energies(spec)
    level = energy[seed].mean() * 10.0 ** (spread_db / 10.0)
    return np.union1d(seed, np.flatnonzero(energy <= level))


def segment_cv(clip: AudioClip, params: StftParams = StftParams(), k: float = 3.0,
               fraction: float = 0.1, vowel_drop_db: float = 6.0) -> list[SegmentSpan]:
    """Split a CV syllable into silence / consonant / vowel spans.

    Frames above the dynamic threshold (computed over :func:`noise_region`)
    are active. Among active frames, the vowel is the longest run whose
    energy stays within ``vowel_drop_db`` of the median active energy; active
    material before it is the consonant. When nothing active precedes the
    vowel, the consonant shrinks to the first hop after the onset. Anything
    after the vowel is reported as trailing silence. A clip with no active
    frame comes back as one silence span.

    Level changes inside speech are placed at the start of a frame's central
    hop; the silence-to-speech onset is placed at the start of the first
    active window's last hop, where a sharp onset first becomes visible.
    """
    if clip.samples.size < 4 * params.window_len:
        raise InsufficientInputError("segment_cv needs at least four windows of audio")
    spec = power_spectrogram(stft(clip, params))
    energy = frame_energies(spec)
    thr = dynamic_threshold(energy, noise_region(spec, fraction), k)
    active = energy > thr
    n = clip.samples.size
    if not active.any():
        return [SegmentSpan(0, n, "silence")]

    first = int(np.flatnonzero(active)[0])
    db = 10.0 * np.log10(energy + 1e-300)
    ref = np.median(db[active])
    loud = active & (db >= ref - vowel_drop_db)
    v_start, v_stop = max(_runs(loud), key=lambda r: (r[1] - r[0], -r[0]))

    hop, win = params.hop, params.window_len

    def centre(f):
        return min(int(f) * hop + (win - hop) // 2, n)

    onset = min(first * hop + win - hop, n - 1)
    v_end = max(centre(v_stop), onset + 1)
    v_begin = centre(v_start)
    if v_start == first or v_begin <= onset:
        v_begin = min(onset + hop, v_end - 1)
    bounds = [(0, onset, "silence"),
              (onset, v_begin, "consonant"),
              (v_begin, v_end, "vowel"),
              (v_end, n, "silence")]
    return [SegmentSpan(a, b, kind) for a, b, kind in bounds if b > a]


def trim_vowel(clip: AudioClip, spans, max_vowel: float = 0.150) -> AudioClip:
    """Cap the vowel at ``max_vowel`` seconds and drop everything after it.

    A vowel already within the cap leaves the clip untouched.
    """
    vowels = [s for s in spans if s.kind == "vowel"]
    if not vowels:
        raise NoSpeechError("no vowel span to trim")
    v = vowels[0]
    cap = int(math.floor(max_vowel * clip.sample_rate))
    if len(v) <= cap:
        return clip
    return clip.with_samples(clip.samples[: v.start + cap])


def format_spans(spans) -> str:
    return "".join(f"{s.kind} {s.start} {s.end}\n" for s in spans)


def parse_spans(text: str) -> list[SegmentSpan]:
    spans = []
    for line in text.splitlines():
        if line.strip():
            kind, a, b = line.split()
            spans.append(SegmentSpan(int(a), int(b), kind))
    return spans
