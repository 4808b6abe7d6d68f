"""End-to-end conditioning: resample -> denoise -> vowel trim -> feature image."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from .audio_io import DEFAULT_SAMPLE_RATE, AudioClip, read_wav, resample_linear
from .denoise import denoise, segment_cv, trim_vowel
from .errors import InsufficientInputError, NoSpeechError
from .features import FeatureConfig, featurize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    sample_rate: int = DEFAULT_SAMPLE_RATE
    denoise: bool = True
    passes: int = 2
    alpha: float = 2.0
    beta: float = 0.02
    noise_fraction: float = 0.1
    trim: bool = True
    threshold_k: float = 3.0
    max_vowel: float = 0.150
    features: FeatureConfig = field(default_factory=FeatureConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        if isinstance(d.get("features"), dict):
            d["features"] = FeatureConfig.from_dict(d["features"])
        return cls(**d)


def prepare_clip(clip: AudioClip, cfg: PipelineConfig = PipelineConfig()) -> AudioClip:
    """Resample, denoise and shorten the vowel.

    Clips too short for denoising, or with no detectable syllable (silence),
    skip the corresponding step instead of failing.
    """
    clip = resample_linear(clip, cfg.sample_rate)
    params = cfg.features.stft_params
    if cfg.denoise and cfg.passes > 0:
        try:
            clip = denoise(clip, cfg.passes, cfg.alpha, cfg.beta, cfg.noise_fraction, params)
        except InsufficientInputError:
            log.debug("clip %s too short to denoise", clip.source)
    if cfg.trim:
        try:
            clip = trim_vowel(clip, segment_cv(clip, params, cfg.threshold_k, cfg.noise_fraction), cfg.max_vowel)
        except (InsufficientInputError, NoSpeechError):
            pass
    return clip


def clip_image(clip: AudioClip, cfg: PipelineConfig = PipelineConfig()) -> np.ndarray:
    return featurize(prepare_clip(clip, cfg), cfg.features).pixels


def featurize_paths(paths, cfg: PipelineConfig = PipelineConfig()) -> np.ndarray:
    """Stack feature images for WAV files into an ``(N, H, W, 1)`` batch."""
    f = cfg.features
    out = np.empty((len(paths), f.out_height, f.out_width, 1))
    for i, p in enumerate(paths):
        out[i, :, :, 0] = clip_image(read_wav(p), cfg)
    return out
