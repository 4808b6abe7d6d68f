"""Phoneme inventory, corpus scanning/splitting and a synthetic CV corpus.

Class order follows the results table numbering: the 23 consonants first
(indices 0-22), then the six vowels (23-28), then silence (29).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .audio_io import DEFAULT_SAMPLE_RATE, AudioClip, write_wav
from .errors import ParameterError

log = logging.getLogger(__name__)

SPLITS = ("train", "test")


@dataclass(frozen=True)
class PhonemeLabel:
    index: int
    ascii_name: str
    persian_form: str
    ipa_form: str
    kind: str  # consonant | vowel | silence


_CONSONANTS = [
    ("p", "پ", "p"), ("b", "ب", "b"), ("t", "ت", "t"), ("d", "د", "d"),
    ("ch", "چ", "tʃ"), ("j", "ج", "dʒ"), ("k", "ک", "k"), ("g", "گ", "g"),
    ("f", "ف", "f"), ("v", "و", "v"), ("kh", "خ", "x"), ("s", "س", "s"),
    ("z", "ز", "z"), ("sh", "ش", "ʃ"), ("zh", "ژ", "ʒ"), ("m", "م", "m"),
    ("n", "ن", "n"), ("h", "ه", "h"), ("l", "ل", "l"), ("r", "ر", "r"),
    ("q", "ق", "q"), ("y", "ی", "j"),
    ("gh", "غ", "ɣ"),  # dialectal, listed separately in the results but not the phoneme table
]
_VOWELS = [
    ("aa", "آ", "ɒː"), ("ii", "ای", "iː"), ("uu", "او", "uː"),
    ("a", "آ", "æ"), ("e", "اِ", "e"), ("o", "أ", "o"),
]

LABELS: tuple = tuple(
    [PhonemeLabel(i, a, p, ipa, "consonant") for i, (a, p, ipa) in enumerate(_CONSONANTS)]
    + [PhonemeLabel(len(_CONSONANTS) + i, a, p, ipa, "vowel") for i, (a, p, ipa) in enumerate(_VOWELS)]
    + [PhonemeLabel(len(_CONSONANTS) + len(_VOWELS), "sil", "-", "", "silence")]
)
_BY_NAME = {lab.ascii_name: lab for lab in LABELS}


def label_inventory() -> list:
    return list(LABELS)


def label_by_name(name: str) -> PhonemeLabel:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise ParameterError(f"unknown phoneme {name!r}") from None


def cv_combinations() -> list:
    """Every consonant-vowel pairing, the syllable units of the corpus."""
    cons = [lab for lab in LABELS if lab.kind == "consonant"]
    vows = [lab for lab in LABELS if lab.kind == "vowel"]
    return [(c, v) for c in cons for v in vows]


@dataclass(frozen=True)
class CorpusEntry:
    path: Path
    label: PhonemeLabel
    split: Optional[str] = None


@dataclass
class Corpus:
    root: Path
    entries: list = field(default_factory=list)
    skipped: dict = field(default_factory=dict)  # unrecognised directory -> file count

    def __len__(self):
        return len(self.entries)

    def subset(self, split: str) -> list:
        return [e for e in self.entries if e.split == split]

    def counts(self) -> dict:
        out = {}
        for e in self.entries:
            out[e.label.ascii_name] = out.get(e.label.ascii_name, 0) + 1
        return out


def scan_corpus(root) -> Corpus:
    """Collect ``root/<ascii_name>/*.wav``; unknown directories are counted in
    ``Corpus.skipped`` and otherwise ignored."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root {root} does not exist")
    corpus = Corpus(root)
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        wavs = sorted(d.glob("*.wav"))
        if d.name not in _BY_NAME:
            corpus.skipped[d.name] = len(wavs)
            log.warning("skipping unrecognised class directory %s (%d files)", d, len(wavs))
            continue
        corpus.entries.extend(CorpusEntry(w, _BY_NAME[d.name]) for w in wavs)
    if not corpus.entries:
        log.warning("corpus at %s is empty", root)
    return corpus


def stratified_split(corpus: Corpus, test_fraction: float = 0.2, seed: int = 42) -> Corpus:
    """Per class, send ``ceil(test_fraction * n)`` seeded-random entries to test."""
    if not 0.0 < test_fraction < 1.0:
        raise ParameterError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    by_class: dict = {}
    for e in sorted(corpus.entries, key=lambda e: str(e.path)):
        by_class.setdefault(e.label.index, []).append(e)
    out = []
    for idx in sorted(by_class):
        group = by_class[idx]
        n_test = math.ceil(test_fraction * len(group))
        test = set(rng.permutation(len(group))[:n_test].tolist())
        out.extend(replace(e, split="test" if i in test else "train") for i, e in enumerate(group))
    return Corpus(corpus.root, out, dict(corpus.skipped))


def write_manifest(corpus: Corpus, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "label", "split"])
        for e in corpus.entries:
            w.writerow([str(e.path), e.label.ascii_name, e.split or ""])


def read_manifest(path, root=None) -> Corpus:
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            entries.append(CorpusEntry(Path(row["path"]), label_by_name(row["label"]), row["split"] or None))
    return Corpus(Path(root) if root else Path(path).parent, entries)


# -- synthetic corpus --------------------------------------------------------

# (first, second) resonance pairs in Hz for the six vowel classes
VOWEL_TONES = {
    "aa": (700.0, 1100.0), "ii": (300.0, 2300.0), "uu": (320.0, 800.0),
    "a": (650.0, 1700.0), "e": (450.0, 1950.0), "o": (480.0, 950.0),
}
# fixed tone that follows every synthetic consonant burst
CV_VOWEL_TONE = (550.0, 1400.0)
NOISE_FLOOR = 0.002


def consonant_band(index: int) -> tuple:
    """Pass band (Hz) of the noise burst for consonant ``index``."""
    centre = 600.0 + 320.0 * index
    return centre - 100.0, centre + 100.0


def _tone(freqs, n, sr, rng, amp):
    t = np.arange(n) / sr
    out = np.zeros(n)
    for f in freqs:
        out += np.sin(2 * np.pi * f * rng.uniform(0.98, 1.02) * t + rng.uniform(0, 2 * np.pi))
    return amp / len(freqs) * out * _envelope(n, int(0.005 * sr))


def _envelope(n, ramp):
    """Linear fade in/out of ``ramp`` samples; avoids broadband clicks."""
    env = np.ones(n)
    ramp = min(n // 2, ramp)
    if ramp:
        env[:ramp] = np.linspace(0.0, 1.0, ramp)
        env[-ramp:] = np.linspace(1.0, 0.0, ramp)
    return env


def _band_noise(lo, hi, n, sr, rng, amp):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sr)
    spec[(f < lo) | (f > hi)] = 0.0
    x = np.fft.irfft(spec, n)
    peak = np.max(np.abs(x))
    x = amp * x / peak if peak > 0 else x
    return x * _envelope(n, int(0.01 * sr))


def synth_clip(label: PhonemeLabel, rng: np.random.Generator, sample_rate: int = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    """One synthetic recording for ``label``.

    Vowels: a two-tone "formant" pair. Consonants: a band-limited noise
    burst with a class-specific pass band, then the shared CV vowel tone.
    Silence: the low-level noise floor only. Durations, amplitudes and
    frequencies are jittered by a few percent.
    """
    sr = sample_rate
    lead = int(sr * rng.uniform(0.075, 0.09))
    tail = int(sr * rng.uniform(0.075, 0.09))
    if label.kind == "vowel":
        body = _tone(VOWEL_TONES[label.ascii_name], int(sr * rng.uniform(0.25, 0.32)), sr, rng,
                     rng.uniform(0.45, 0.55))
    elif label.kind == "consonant":
        lo, hi = consonant_band(label.index)
        burst = _band_noise(lo, hi, int(sr * rng.uniform(0.085, 0.095)), sr, rng, rng.uniform(0.12, 0.16))
        vowel = _tone(CV_VOWEL_TONE, int(sr * rng.uniform(0.25, 0.32)), sr, rng, rng.uniform(0.45, 0.55))
        body = np.concatenate([burst, vowel])
    else:
        body = np.zeros(int(sr * rng.uniform(0.25, 0.32)))
    x = np.concatenate([np.zeros(lead), body, np.zeros(tail)])
    floor = NOISE_FLOOR * (rng.uniform(1.0, 3.0) if label.kind == "silence" else 1.0)
    return x + floor * rng.standard_normal(x.size)


def synth_corpus(root, per_class: int = 10, seed: int = 42, sample_rate: int = DEFAULT_SAMPLE_RATE) -> Corpus:
    """Write ``per_class`` 16-bit clips for each of the 30 classes under
    ``root/<ascii_name>/`` and return the scanned corpus.

    Each file gets its own generator seeded by ``(seed, class, item)``, so
    output is bit-identical across runs and independent of generation order.
    """
    if per_class < 1:
        raise ParameterError("per_class must be >= 1")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for lab in LABELS:
        d = root / lab.ascii_name
        d.mkdir(exist_ok=True)
        for i in range(per_class):
            rng = np.random.default_rng([seed, lab.index, i])
            write_wav(AudioClip(synth_clip(lab, rng, sample_rate), sample_rate), d / f"{lab.ascii_name}_{i:03d}.wav")
    return scan_corpus(root)
