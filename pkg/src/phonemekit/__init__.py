"""Phoneme classification from consonant-vowel recordings: WAV I/O, STFT/MFCC
front ends, spectral-subtraction denoising, a numpy CNN and evaluation."""

__version__ = "0.1.0"

from .audio_io import AudioClip, read_wav, write_wav  # noqa: E402
from .dataset import LABELS, label_inventory  # noqa: E402
from .errors import PhonemeKitError  # noqa: E402
from .features import FeatureConfig, featurize  # noqa: E402
from .phoneme_net import build_phoneme_cnn  # noqa: E402
from .pipeline import PipelineConfig  # noqa: E402

__all__ = [
    "AudioClip", "FeatureConfig", "LABELS", "PhonemeKitError", "PipelineConfig", "build_phoneme_cnn",
    "featurize", "label_inventory", "read_wav", "write_wav", "__version__",
]
