"""WAV reading/writing and conditioning into mono float64 clips."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DegenerateInputError, ParameterError, UnsupportedFormatError, WavFormatError

DEFAULT_SAMPLE_RATE = 44100

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioClip:
    """Mono sample sequence with its sample rate.

    ``samples`` is stored as a read-only float64 array so clips can be
    shared freely between stages and threads.
    """

    samples: np.ndarray
    sample_rate: int
    source: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ParameterError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        if not np.all(np.isfinite(samples)):
            raise ParameterError("samples contain NaN or Inf")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples) -> "AudioClip":
        return AudioClip(samples, self.sample_rate, self.source)


def _parse_fmt(body: bytes):
    if len(body) < 16:
        raise WavFormatError("fmt chunk shorter than 16 bytes")
    tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", body[:16])
    if tag == _WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 40:
            raise WavFormatError("WAVE_FORMAT_EXTENSIBLE fmt chunk too short")
        # first two bytes of the SubFormat GUID carry the actual format tag
        tag = struct.unpack("<H", body[24:26])[0]
    return tag, channels, rate, block_align, bits


def read_wav(path) -> AudioClip:
    """Read a RIFF/WAVE file into a mono :class:`AudioClip`.

    Integer PCM is scaled by ``2**(bits-1)`` so negative full scale maps to
    -1.0; 8-bit data is unsigned and offset by 128. Stereo is averaged.
    Chunks other than ``fmt `` and ``data`` are skipped.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        size = struct.unpack("<I", raw[pos + 4:pos + 8])[0]
        body = raw[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            fmt = _parse_fmt(body)
        elif cid == b"data":
            if len(body) < size:
                raise WavFormatError(f"{path}: data chunk truncated")
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavFormatError(f"{path}: missing data chunk")

    tag, channels, rate, block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedFormatError(f"{path}: {channels} channels (only mono/stereo supported)")
    if rate <= 0:
        raise WavFormatError(f"{path}: sample rate {rate}")
    width = bits // 8
    if bits % 8 or block_align != width * channels:
        raise WavFormatError(f"{path}: inconsistent block alignment")

    n = len(data) // block_align
    data = data[: n * block_align]
    if tag == _WAVE_FORMAT_PCM and bits == 8:
        x = (np.frombuffer(data, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif tag == _WAVE_FORMAT_PCM and bits == 16:
        x = np.frombuffer(data, dtype="<i2") / 32768.0
    elif tag == _WAVE_FORMAT_PCM and bits == 24:
        b = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        x = v / float(1 << 23)
    elif tag == _WAVE_FORMAT_PCM and bits == 32:
        x = np.frombuffer(data, dtype="<i4") / float(1 << 31)
    elif tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        x = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedFormatError(f"{path}: format tag {tag:#06x} with {bits} bits")

    x = x.reshape(n, channels).mean(axis=1)
    return AudioClip(x, rate, str(path))


def write_wav(clip: AudioClip, path, bit_depth=16) -> None:
    """Write ``clip`` as 16-bit PCM or 32-bit IEEE float (``bit_depth="32f"``).

    16-bit output rounds ``x * 32768`` and clamps to the int16 range, so 1.0
    is stored as 32767.
    """
    if bit_depth in (16, "16"):
        q = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
        tag, bits = _WAVE_FORMAT_PCM, 16
    elif bit_depth in (32, "32", "32f", "32-float", "float"):
        q = clip.samples.astype("<f4")
        tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ParameterError(f"unsupported bit depth {bit_depth!r}")
    payload = q.tobytes()
    block = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, clip.sample_rate, clip.sample_rate * block, block, bits)
    header = b"RIFF" + struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(payload)) + b"WAVE"
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(b"fmt " + struct.pack("<I", len(fmt)) + fmt)
        fh.write(b"data" + struct.pack("<I", len(payload)) + payload)


def resample_linear(clip: AudioClip, target_rate: int) -> AudioClip:
    if target_rate <= 0:
        raise ParameterError("target_rate must be positive")
    target_rate = int(target_rate)
    if target_rate == clip.sample_rate:
        return AudioClip(clip.samples, target_rate, clip.source)
    n_in = clip.samples.size
    n_out = int(round(n_in * target_rate / clip.sample_rate))
    if n_in == 0 or n_out == 0:
        return AudioClip(np.zeros(n_out), target_rate, clip.source)
    t = np.arange(n_out) * (clip.sample_rate / target_rate)
    y = np.interp(t, np.arange(n_in), clip.samples)
    return AudioClip(y, target_rate, clip.source)


def normalize_peak(clip: AudioClip, target_peak: float = 1.0) -> AudioClip:
    if not 0.0 < target_peak <= 1.0:
        raise ParameterError("target_peak must lie in (0, 1]")
    peak = np.max(np.abs(clip.samples)) if clip.samples.size else 0.0
    if peak == 0.0:
        raise DegenerateInputError("cannot peak-normalize a silent clip")
    return clip.with_samples(clip.samples * (target_peak / peak))
