"""Fixed-size grayscale feature images for the CNN.

Image rows are frequency (or cepstral coefficient) with row 0 the lowest;
columns are time.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioClip
from .dsp import LOG_FLOOR, Spectrogram, StftParams, log_spectrogram, mfcc, power_spectrogram, stft
from .errors import FormatError, ParameterError

FRONT_ENDS = ("stft", "mfcc")


@dataclass(frozen=True)
class FeatureConfig:
    front_end: str = "stft"
    stft_params: StftParams = field(default_factory=StftParams)
    n_mels: int = 40
    n_coeffs: int = 13
    crop_f_min: float = 0.0
    crop_f_max: float = 8000.0
    out_height: int = 81
    out_width: int = 81
    binarize: bool = False
    binarize_threshold: float = 0.5
    # dB values more than this far below the image peak are clamped (None: no clamp)
    top_db: float | None = 60.0

    def __post_init__(self):
        if self.front_end not in FRONT_ENDS:
            raise ParameterError(f"front_end must be one of {FRONT_ENDS}, got {self.front_end!r}")
        if self.out_height < 1 or self.out_width < 1:
            raise ParameterError("output image must be at least 1x1")
        if not self.crop_f_min < self.crop_f_max:
            raise ParameterError("crop_f_min must be below crop_f_max")
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ParameterError("binarize_threshold must lie in (0, 1)")
        if self.top_db is not None and self.top_db <= 0:
            raise ParameterError("top_db must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        d = dict(d)
        if isinstance(d.get("stft_params"), dict):
            d["stft_params"] = StftParams(**d["stft_params"])
        return cls(**d)


@dataclass(frozen=True)
class FeatureImage:
    pixels: np.ndarray
    config: FeatureConfig


def crop_band(spec: Spectrogram, f_min: float, f_max: float) -> Spectrogram:
    """Keep the bins whose centre frequency lies in ``[f_min, f_max]``."""
    freqs = spec.frequencies
    keep = np.flatnonzero((freqs >= f_min) & (freqs <= f_max))
    if keep.size == 0:
        raise ParameterError(f"band [{f_min}, {f_max}] Hz contains no bins")
    lo, hi = keep[0], keep[-1] + 1
    return Spectrogram(spec.power[:, lo:hi], spec.frame_period, spec.bin_width, float(freqs[lo]))


def minmax_normalize(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    lo, hi = m.min(), m.max()
    if hi == lo:
        return np.zeros_like(m)
    return (m - lo) / (hi - lo)


def binarize(image, threshold: float = 0.5) -> np.ndarray:
    return (np.asarray(image) >= threshold).astype(np.float64)


def resize_bilinear(matrix, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling on a corner-aligned grid (output corners hit input corners)."""
    m = np.asarray(matrix, dtype=np.float64)
    h, w = m.shape
    if h < 1 or w < 1 or out_h < 1 or out_w < 1:
        raise ParameterError("resize needs non-empty input and output")
    ys = np.linspace(0.0, h - 1, out_h)
    xs = np.linspace(0.0, w - 1, out_w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = m[y0][:, x0] * (1 - fx) + m[y0][:, x1] * fx
    bottom = m[y1][:, x0] * (1 - fx) + m[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def featurize(clip: AudioClip, cfg: FeatureConfig = FeatureConfig()) -> FeatureImage:
    """Turn a clip into an ``out_height x out_width`` image in [0, 1].

    stft: power -> band crop -> dB (clamped ``top_db`` below the peak) ->
    min-max -> resize -> optional binarize.
    mfcc: coefficients -> min-max -> resize.
    Binarizing after the resize keeps the output strictly two-valued.
    """
    if cfg.front_end == "stft":
        spec = crop_band(power_spectrogram(stft(clip, cfg.stft_params)), cfg.crop_f_min, cfg.crop_f_max)
        db = log_spectrogram(spec, LOG_FLOOR)
        if cfg.top_db is not None:
            db = np.maximum(db, db.max() - cfg.top_db)
        img = resize_bilinear(minmax_normalize(db.T), cfg.out_height, cfg.out_width)
        if cfg.binarize:
            img = binarize(img, cfg.binarize_threshold)
    else:
        coeffs = mfcc(clip, cfg.stft_params, cfg.n_mels, cfg.n_coeffs)
        img = resize_bilinear(minmax_normalize(coeffs.T), cfg.out_height, cfg.out_width)
    return FeatureImage(np.clip(img, 0.0, 1.0), cfg)


def export_pgm(image, path) -> None:
    """Binary PGM (P5, maxval 255), pixel byte = round(255 * value)."""
    px = image.pixels if isinstance(image, FeatureImage) else np.asarray(image)
    data = np.round(np.clip(px, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported")
    body = raw[pos:pos + w * h]
    if len(body) < w * h:
        raise FormatError(f"{path}: truncated PGM payload")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w) / 255.0
