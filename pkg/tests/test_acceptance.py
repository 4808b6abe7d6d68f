"""Acceptance suite: each test records one PASS/FAIL line (collected in the
terminal summary) and then asserts the same condition."""

import math
import time

import numpy as np
import pytest
from acceptance_log import record
from nn_helpers import onehot, reduced_model
from reference_table import AVERAGE, ROWS, TOTAL_SUPPORT

from phonemekit.audio_io import AudioClip
from phonemekit.denoise import denoise
from phonemekit.dsp import dft_naive, fft, istft, mfcc, power_spectrogram, stft
from phonemekit.evaluation import report_from_rows, top_k_accuracy
from phonemekit.nn import (
    Conv2D, Dense, Dropout, Flatten, MaxPool2D, TrainConfig, cross_entropy, fit, make_optimizer, to_onehot,
)
from phonemekit.nn.gradcheck import gradient_check, gradient_check_layer
from phonemekit.nn.optim import optimizer_step
from phonemekit.phoneme_net import build_phoneme_cnn

SR = 44100

# Fixed budget for the desk-scale run. A pilot at this seed crossed 0.9
# held-out accuracy around epoch 20; 40 epochs fits well inside 30 minutes.
E2E_EPOCHS = 40
E2E_SEED = 42


def test_fft_matches_naive_dft():
    rng = np.random.default_rng(0)
    sizes = 2 ** rng.integers(3, 9, 1000)
    worst = 0.0
    start = time.perf_counter()
    for n in sizes:
        x = rng.standard_normal(n)
        got = fft(x)
        worst = max(worst, np.linalg.norm(got - dft_naive(x)) / np.linalg.norm(dft_naive(x)))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-9 and elapsed < 10.0
    record("FFT vs naive DFT", ok, f"max rel err {worst:.2e} (< 1e-9), {elapsed:.2f} s (< 10 s) over 1000 signals")
    assert ok


def test_stft_round_trip():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(4096, 16384))
        x = rng.uniform(-1, 1, n)
        y = istft(stft(AudioClip(x, SR))).samples
        worst = max(worst, np.max(np.abs(y[1024:-1024] - x[1024:-1024])))
    ok = worst < 1e-8
    record("STFT round trip", ok, f"max interior error {worst:.2e} (< 1e-8) over 100 clips")
    assert ok


def voiced(rng, f0, n=8192):
    t = np.arange(n) / SR
    harmonics = sum(np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 2 * np.pi)) / h for h in range(1, 40))
    return 0.3 * harmonics + 1e-3 * rng.standard_normal(n)


def test_mfcc_gain_property():
    rng = np.random.default_rng(2)
    d_rest, d_c0 = 0.0, 0.0
    for f0 in (110.0, 180.0, 240.0):
        x = voiced(rng, f0)
        a, b = mfcc(AudioClip(x, SR)), mfcc(AudioClip(10 * x, SR))
        d_rest = max(d_rest, np.max(np.abs(b[:, 1:] - a[:, 1:])))
        d_c0 = max(d_c0, np.max(np.abs(b[:, 0] - a[:, 0] - math.log(100) * math.sqrt(40))))
    ok = d_rest < 1e-9 and d_c0 < 1e-6
    record("MFCC gain property", ok, f"c1..c12 max diff {d_rest:.2e} (< 1e-9), c0 shift error {d_c0:.2e} (< 1e-6)")
    assert ok


FULL_LAYERS = [
    (Conv2D(32, (3, 3), (1, 1)), (5, 5, 1)),
    (Conv2D(32, (3, 3), (1, 1)), (5, 5, 32)),
    (Conv2D(64, (3, 3), (1, 1)), (4, 4, 32)),
    (Conv2D(64, (5, 5), (3, 3)), (7, 7, 64)),
    (Conv2D(128, (5, 5), (3, 3)), (5, 5, 64)),
    (Conv2D(128, (5, 5), (3, 3)), (3, 3, 128)),
    (MaxPool2D((3, 3)), (7, 7, 4)),
    (Dropout(0.2), (4, 4, 3)),
    (Dropout(0.5), (20,)),
    (Dropout(0.6), (20,)),
    (Flatten(), (3, 3, 2)),
    (Dense(1024, "relu", max_norm=3.0), (128,)),
    (Dense(128, "relu", max_norm=3.0), (1024,)),
    (Dense(30, "softmax"), (128,)),
]


def test_gradient_check():
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    m = reduced_model()
    res = gradient_check(m, rng.standard_normal((3, 9, 9, 1)), onehot([0, 3, 4], 5), seed=5, check_input=True)
    worst_model = res.max_rel_error
    worst_layer = 0.0
    for layer, shape in FULL_LAYERS:
        layer.build(shape, np.random.default_rng(0))
        if "b" in layer.params:
            layer.params["b"][...] = rng.uniform(-0.1, 0.1, layer.params["b"].shape)
        r = gradient_check_layer(layer, rng.standard_normal((2,) + shape), seed=3, max_entries=150)
        worst_layer = max(worst_layer, r.max_rel_error)
    elapsed = time.perf_counter() - start
    ok = worst_model < 1e-4 and worst_layer < 1e-4 and elapsed < 60.0
    record("Gradient check", ok, f"reduced model {worst_model:.2e}, full-size layers {worst_layer:.2e} "
                                 f"(< 1e-4), {elapsed:.1f} s (< 60 s)")
    assert ok


EXPECTED_STACK = [
    ("conv2d", 32, (3, 3), (1, 1)), ("dropout", 0.2), ("conv2d", 32, (3, 3), (1, 1)), ("maxpool2d", (3, 3)),
    ("conv2d", 64, (3, 3), (1, 1)), ("dropout", 0.2), ("conv2d", 64, (5, 5), (3, 3)), ("maxpool2d", (3, 3)),
    ("conv2d", 128, (5, 5), (3, 3)), ("dropout", 0.2), ("conv2d", 128, (5, 5), (3, 3)), ("maxpool2d", (3, 3)),
    ("flatten",), ("dropout", 0.5), ("dense", 1024), ("dropout", 0.5), ("dense", 128), ("dropout", 0.6),
    ("dense", 30),
]


def _describe(layer):
    if isinstance(layer, Conv2D):
        return ("conv2d", layer.n_filters, layer.kernel_size, layer.strides)
    if isinstance(layer, MaxPool2D):
        return ("maxpool2d", layer.pool_size)
    if isinstance(layer, Dropout):
        return ("dropout", layer.rate)
    if isinstance(layer, Dense):
        return ("dense", layer.units)
    return (layer.kind,)


def test_shape_contract():
    m = build_phoneme_cnn((81, 81, 1), 30)
    flat = next(layer for layer in m.layers if isinstance(layer, Flatten))
    stack = [_describe(layer) for layer in m.layers]
    ok = (flat.output_shape == (128,) and m.output_shape == (30,) and m.layers[-1].activation == "softmax"
          and stack == EXPECTED_STACK)
    record("Shape contract", ok, f"flatten {flat.output_shape}, output {m.output_shape}, "
                                 f"{len(stack)} layers match the expected stack: {stack == EXPECTED_STACK}")
    assert ok


def test_max_norm_under_all_optimizers():
    rng = np.random.default_rng(4)
    worst = {}
    for name in ("sgd", "adam", "adadelta"):
        m = build_phoneme_cnn((9, 9, 1), 30, seed=0)
        opt = make_optimizer(name, lr=5.0) if name == "sgd" else make_optimizer(name)
        constrained = [layer for layer in m.layers if isinstance(layer, Dense) and layer.max_norm]
        top = 0.0
        for _ in range(100):
            optimizer_step(m, opt, [20 * rng.standard_normal(p.shape) for p in m.parameters()])
            top = max(top, max(np.linalg.norm(layer.params["W"], axis=0).max() for layer in constrained))
        worst[name] = top
    ok = all(v <= 3 + 1e-9 for v in worst.values())
    record("Max-norm", ok, ", ".join(f"{k} max column norm {v:.12f}" for k, v in worst.items()) + " (<= 3 + 1e-9)")
    assert ok


def test_published_table_arithmetic():
    p, r, f, s = (np.array(c) for c in zip(*ROWS))
    rep = report_from_rows(p, r, s)
    f1_gap = np.max(np.abs(rep.f1 - f))
    avg_gap = max(abs(a - b) for a, b in zip(rep.weighted(), AVERAGE))
    ok = f1_gap <= 0.01 and avg_gap <= 0.01 and rep.total_support == TOTAL_SUPPORT
    record("Results table arithmetic", ok, f"max F1 gap {f1_gap:.4f}, weighted average gap {avg_gap:.4f} "
                                           f"(<= 0.01), total support {rep.total_support} (== {TOTAL_SUPPORT})")
    assert ok


def test_metric_laws():
    rng = np.random.default_rng(5)
    probs = rng.random((1000, 30))
    truth = rng.integers(0, 30, 1000)
    curve = [top_k_accuracy(probs, truth, k) for k in range(1, 31)]
    monotone = all(a <= b for a, b in zip(curve, curve[1:]))
    mc = top_k_accuracy(rng.random((100_000, 30)), rng.integers(0, 30, 100_000), 3)
    ok = monotone and curve[-1] == 1.0 and abs(mc - 0.1) <= 0.01
    record("Metric laws", ok, f"top-k non-decreasing: {monotone}, top-30 = {curve[-1]}, "
                              f"uniform top-3 = {mc:.4f} (0.1 +/- 0.01)")
    assert ok


def test_denoising():
    rng = np.random.default_rng(6)
    n_lead, n_body = SR // 2, SR
    clean = np.r_[np.zeros(n_lead), 0.5 * np.sin(2 * np.pi * 1000 * np.arange(n_body) / SR)]
    noise = rng.standard_normal(clean.size) * np.sqrt(0.125)  # 0 dB against the tone
    out = denoise(AudioClip(clean + noise, SR)).samples
    before = 10 * np.log10(np.sum(clean ** 2) / np.sum(noise ** 2))
    after = 10 * np.log10(np.sum(clean ** 2) / np.sum((clean - out) ** 2))
    kept = denoise(AudioClip(clean + 1e-4 * rng.standard_normal(clean.size), SR))
    band = slice(20, 27)
    retention = (power_spectrogram(stft(kept)).power[:, band].sum()
                 / power_spectrogram(stft(AudioClip(clean, SR))).power[:, band].sum())
    ok = after >= 6.0 and retention >= 0.9
    record("Denoising", ok, f"output SNR {after:.2f} dB from {before:.2f} dB (>= 6 dB), "
                            f"clean tone band retention {retention:.3f} (>= 0.9)")
    assert ok


def test_cross_entropy_closed_forms():
    uniform = cross_entropy(np.full((4, 30), 1 / 30), to_onehot([0, 5, 17, 29], 30))
    perfect = cross_entropy(to_onehot([3, 8], 30), to_onehot([3, 8], 30))
    ok = abs(uniform - math.log(30)) <= 1e-9 and perfect == 0.0
    record("Cross-entropy closed forms", ok, f"uniform {uniform:.12f} vs ln 30 {math.log(30):.12f}, "
                                             f"perfect {abs(perfect)}")
    assert ok


@pytest.mark.slow
def test_end_to_end_desk_run(desk_corpus, tmp_path):
    corpus, x, y, split, prep_seconds = desk_corpus
    train, test = split == "train", split == "test"
    k = 30
    start = time.perf_counter()
    model = build_phoneme_cnn((81, 81, 1), k, seed=E2E_SEED).compile("adadelta")
    snapshot = {}

    def keep_epoch_two(epoch, hist):
        if epoch == 1:
            snapshot["params"] = [p.copy() for p in model.parameters()]

    hist = fit(model, x[train], to_onehot(y[train], k), TrainConfig(epochs=E2E_EPOCHS, seed=E2E_SEED),
               on_epoch=keep_epoch_two)
    probs = model.predict(x[test])
    top1, top3 = top_k_accuracy(probs, y[test], 1), top_k_accuracy(probs, y[test], 3)
    elapsed = prep_seconds + time.perf_counter() - start

    # same seed, fresh model: the first two epochs must repeat bit for bit
    again = build_phoneme_cnn((81, 81, 1), k, seed=E2E_SEED).compile("adadelta")
    rep = fit(again, x[train], to_onehot(y[train], k), TrainConfig(epochs=2, seed=E2E_SEED))
    same = (rep.loss == hist.loss[:2] and rep.accuracy == hist.accuracy[:2]
            and all(np.array_equal(a, b) for a, b in zip(again.parameters(), snapshot["params"])))

    from phonemekit.dataset import synth_corpus
    regen = synth_corpus(tmp_path / "again", per_class=20, seed=42)
    same_audio = all(a.path.read_bytes() == b.path.read_bytes()
                     for a, b in zip(sorted(regen.entries, key=lambda e: (e.label.index, e.path.name)),
                                     sorted(corpus.entries, key=lambda e: (e.label.index, e.path.name))))
    same = same and same_audio and len(regen.entries) == len(corpus.entries)

    ok = top1 >= 0.9 and top3 >= 0.98 and elapsed <= 1800 and hist.epochs_run <= 150 and same
    record("End-to-end desk run", ok, f"{hist.epochs_run} epochs, held-out top-1 {top1:.3f} (>= 0.9), "
                                      f"top-3 {top3:.3f} (>= 0.98), {elapsed / 60:.1f} min (<= 30), "
                                      f"bit-reproducible: {same}")
    assert ok
