"""Spectral transforms: DFT/FFT, STFT and inverse, spectrograms, Haar DWT,
mel filterbank, DCT-II and MFCC.

Frames are rows throughout; a spectrogram has shape ``(n_frames, n_bins)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .audio_io import AudioClip
from .errors import FormatError, InsufficientInputError, ParameterError, TruncatedFileError

LOG_FLOOR = 1e-10
WINDOW_KINDS = ("rectangular", "hann", "hamming")


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class StftParams:
    window_len: int = 1024
    hop: int = 256
    fft_size: int = 1024
    window_kind: str = "hann"

    def __post_init__(self):
        if not 0 < self.hop <= self.window_len <= self.fft_size:
            raise ParameterError(
                f"need 0 < hop <= window_len <= fft_size, got {self.hop}, {self.window_len}, {self.fft_size}")
        if not _is_pow2(self.fft_size):
            raise ParameterError(f"fft_size {self.fft_size} is not a power of two")
        if self.window_kind not in WINDOW_KINDS:
            raise ParameterError(f"unknown window {self.window_kind!r}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass(frozen=True)
class ComplexFrames:
    """STFT output. ``length`` remembers the analysed clip length."""

    frames: np.ndarray
    params: StftParams
    sample_rate: int
    length: int = 0

    def with_frames(self, frames) -> "ComplexFrames":
        return ComplexFrames(np.asarray(frames), self.params, self.sample_rate, self.length)


@dataclass(frozen=True)
class Spectrogram:
    """Power matrix (frames x bins). Row ``b`` of the frequency axis sits at
    ``f_start + b * bin_width`` Hz."""

    power: np.ndarray
    frame_period: float
    bin_width: float
    f_start: float = 0.0

    @property
    def frequencies(self) -> np.ndarray:
        return self.f_start + self.bin_width * np.arange(self.power.shape[1])


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray
    mel_centers: np.ndarray
    f_min: float
    f_max: float


def window(kind: str, n: int) -> np.ndarray:
    """Periodic window of length ``n`` (the DFT-even form, which is COLA at hop n/4)."""
    k = np.arange(n)
    if kind == "rectangular":
        return np.ones(n)
    if kind == "hann":
        return 0.5 - 0.5 * np.cos(2 * np.pi * k / n)
    if kind == "hamming":
        return 0.54 - 0.46 * np.cos(2 * np.pi * k / n)
    raise ParameterError(f"unknown window {kind!r}")


def dft_naive(signal) -> np.ndarray:
    x = np.asarray(signal, dtype=np.complex128)
    n = x.shape[-1]
    if n < 1:
        raise ParameterError("dft_naive needs at least one sample")
    k = np.arange(n)
    return x @ np.exp(-2j * np.pi * np.outer(k, k) / n)


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(signal, fft_size: int | None = None) -> np.ndarray:
    """Iterative radix-2 FFT over the last axis.

    The input is zero-padded or truncated to ``fft_size``; leading axes are
    transformed independently.
    """
    x = np.asarray(signal)
    if fft_size is None:
        fft_size = x.shape[-1]
    if not _is_pow2(fft_size):
        raise ParameterError(f"fft_size {fft_size} is not a power of two")
    n = x.shape[-1]
    if n < fft_size:
        pad = [(0, 0)] * (x.ndim - 1) + [(0, fft_size - n)]
        x = np.pad(x, pad)
    else:
        x = x[..., :fft_size]
    a = x[..., _bit_reverse(fft_size)].astype(np.complex128)
    lead = a.shape[:-1]
    size = 2
    while size <= fft_size:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        a = a.reshape(*lead, fft_size // size, size)
        even = a[..., :half]
        odd = a[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return a.reshape(*lead, fft_size)


def ifft(spectrum) -> np.ndarray:
    X = np.asarray(spectrum, dtype=np.complex128)
    return np.conj(fft(np.conj(X))) / X.shape[-1]


def stft(clip: AudioClip, params: StftParams = StftParams()) -> ComplexFrames:
    x = clip.samples
    if x.size < params.window_len:
        raise InsufficientInputError(
            f"clip has {x.size} samples, shorter than one {params.window_len}-sample window")
    segs = sliding_window_view(x, params.window_len)[:: params.hop]
    spec = fft(segs * window(params.window_kind, params.window_len), params.fft_size)
    return ComplexFrames(spec[:, : params.n_bins], params, clip.sample_rate, x.size)


def istft(frames: ComplexFrames, eps: float = 1e-10) -> AudioClip:
    """Overlap-add inverse with window-squared normalisation.

    Samples whose accumulated window energy is below ``eps`` (the outer
    edges of a hann analysis) are left at zero.
    """
    p = frames.params
    X = np.asarray(frames.frames)
    n_frames = X.shape[0]
    # rebuild the Hermitian-symmetric full spectrum from the kept half
    full = np.concatenate([X, np.conj(X[:, -2:0:-1])], axis=1)
    segs = ifft(full).real[:, : p.window_len]
    w = window(p.window_kind, p.window_len)
    length = (n_frames - 1) * p.hop + p.window_len if n_frames else 0
    out = np.zeros(length)
    norm = np.zeros(length)
    for f in range(n_frames):
        s = f * p.hop
        out[s:s + p.window_len] += segs[f] * w
        norm[s:s + p.window_len] += w * w
    ok = norm > eps
    out[ok] /= norm[ok]
    out[~ok] = 0.0
    if frames.length > length:
        out = np.concatenate([out, np.zeros(frames.length - length)])
    return AudioClip(out, frames.sample_rate)


def power_spectrogram(frames: ComplexFrames) -> Spectrogram:
    X = np.asarray(frames.frames)
    power = X.real ** 2 + X.imag ** 2
    return Spectrogram(power, frames.params.hop / frames.sample_rate,
                       frames.sample_rate / frames.params.fft_size)


def log_spectrogram(spec: Spectrogram, floor_eps: float = LOG_FLOOR) -> np.ndarray:
    """Power in decibels, ``10 log10(power + floor_eps)``."""
    if floor_eps <= 0:
        raise ParameterError("floor_eps must be positive")
    return 10.0 * np.log10(spec.power + floor_eps)


def haar_dwt(signal):
    """Single-level orthonormal Haar transform, returns ``(approx, detail)``."""
    x = np.asarray(signal, dtype=np.float64)
    if x.size % 2:
        raise ParameterError("haar_dwt needs an even-length signal")
    even, odd = x[0::2], x[1::2]
    return (even + odd) / np.sqrt(2.0), (even - odd) / np.sqrt(2.0)


def haar_idwt(approx, detail) -> np.ndarray:
    a = np.asarray(approx, dtype=np.float64)
    d = np.asarray(detail, dtype=np.float64)
    out = np.empty(2 * a.size)
    out[0::2] = (a + d) / np.sqrt(2.0)
    out[1::2] = (a - d) / np.sqrt(2.0)
    return out


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def make_mel_filterbank(n_mels: int, fft_size: int, sample_rate: int,
                        f_min: float = 0.0, f_max: float | None = None) -> MelFilterbank:
    """Triangular filters on the mel axis.

    Centres are equally spaced from ``mel(f_min)`` to ``mel(f_max)``
    inclusive and each triangle falls to zero at its neighbours' centres, so
    the weights form a partition of unity over the band and no bin inside
    ``[f_min, f_max]`` is left uncovered.
    """
    if f_max is None:
        f_max = sample_rate / 2.0
    if n_mels < 1:
        raise ParameterError("n_mels must be >= 1")
    if not 0.0 <= f_min < f_max <= sample_rate / 2.0:
        raise ParameterError(f"invalid band [{f_min}, {f_max}] for sample rate {sample_rate}")
    m_lo, m_hi = float(hz_to_mel(f_min)), float(hz_to_mel(f_max))
    if n_mels == 1:
        centers = np.array([(m_lo + m_hi) / 2.0])
        step = m_hi - m_lo
    else:
        centers = np.linspace(m_lo, m_hi, n_mels)
        step = (m_hi - m_lo) / (n_mels - 1)
    bin_mels = hz_to_mel(np.arange(fft_size // 2 + 1) * sample_rate / fft_size)
    weights = np.maximum(0.0, 1.0 - np.abs(bin_mels[None, :] - centers[:, None]) / step)
    return MelFilterbank(weights, centers, float(f_min), float(f_max))


def dct_matrix(m: int) -> np.ndarray:
    k = np.arange(m)[:, None]
    n = np.arange(m)[None, :]
    D = np.sqrt(2.0 / m) * np.cos(np.pi * k * (2 * n + 1) / (2 * m))
    D[0] /= np.sqrt(2.0)
    return D


def dct_ii(vector) -> np.ndarray:
    """Orthonormal DCT-II over the last axis."""
    x = np.asarray(vector, dtype=np.float64)
    if x.shape[-1] < 1:
        raise ParameterError("dct_ii needs at least one element")
    return x @ dct_matrix(x.shape[-1]).T


def idct_ii(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=np.float64)
    return c @ dct_matrix(c.shape[-1])


def mfcc(clip: AudioClip, params: StftParams = StftParams(), n_mels: int = 40,
         n_coeffs: int = 13, floor_eps: float = LOG_FLOOR,
         f_min: float = 0.0, f_max: float | None = None) -> np.ndarray:
    """MFCC matrix of shape ``(n_frames, n_coeffs)``.

    Power spectrum -> mel filterbank -> natural log (band energies clamped
    below at ``floor_eps``) -> orthonormal DCT-II, truncated to the first
    ``n_coeffs`` coefficients. The clamp, unlike an additive floor, leaves
    gain invariance of c1.. exact for bands above the floor.
    """
    if not 1 <= n_coeffs <= n_mels:
        raise ParameterError("need 1 <= n_coeffs <= n_mels")
    if floor_eps <= 0:
        raise ParameterError("floor_eps must be positive")
    spec = power_spectrogram(stft(clip, params))
    fb = make_mel_filterbank(n_mels, params.fft_size, clip.sample_rate, f_min, f_max)
    logmel = np.log(np.maximum(spec.power @ fb.weights.T, floor_eps))
    return dct_ii(logmel)[:, :n_coeffs]


# -- matrix export -----------------------------------------------------------

BLOB_MAGIC = b"SPEC"
_BLOB_HEADER = struct.Struct("<4sIII")  # magic, rows, cols, reserved


def save_matrix_csv(matrix, path) -> None:
    np.savetxt(path, np.atleast_2d(np.asarray(matrix, dtype=np.float64)), delimiter=",", fmt="%.17g")


def load_matrix_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))


def save_matrix_blob(matrix, path) -> None:
    """Little-endian float64 row-major payload behind a 16-byte ``SPEC`` header."""
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "wb") as fh:
        fh.write(_BLOB_HEADER.pack(BLOB_MAGIC, m.shape[0], m.shape[1], 0))
        fh.write(np.ascontiguousarray(m).astype("<f8").tobytes())


def load_matrix_blob(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _BLOB_HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated")
    magic, rows, cols, _ = _BLOB_HEADER.unpack_from(raw)
    if magic != BLOB_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    need = _BLOB_HEADER.size + 8 * rows * cols
    if len(raw) < need:
        raise TruncatedFileError(f"{path}: payload truncated")
    return np.frombuffer(raw[_BLOB_HEADER.size:need], dtype="<f8").reshape(rows, cols).copy()
