import math
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from nn_helpers import onehot, randomize_biases, reduced_model

from phonemekit.errors import (
    CompositionError, ModelFormatError, NumericFailureError, ParameterError, TruncatedFileError,
    UnsupportedVersionError,
)
from phonemekit.nn import (
    SGD, AdaDelta, Adam, Conv2D, Dense, Dropout, Flatten, MaxPool2D, Model, StaleCacheError, TrainConfig,
    apply_max_norm, cross_entropy, fit, gradient_check, gradient_check_layer, load_model, make_optimizer,
    optimizer_step, relu, save_model, softmax, to_onehot,
)

logits = arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(2, 12)), elements=st.floats(-50, 50))


def built(layer, shape, seed=0):
    layer.build(shape, np.random.default_rng(seed))
    return layer


# -- activations and loss ----------------------------------------------------

def test_relu_examples():
    assert relu(np.array([-1.0, 0.0, 2.0])).tolist() == [0, 0, 2]
    assert np.all(relu(-np.arange(1.0, 5.0)) == 0)


@given(arrays(np.float64, 10, elements=st.floats(-1e3, 1e3)))
def test_relu_idempotent(x):
    assert np.array_equal(relu(relu(x)), relu(x))


def test_softmax_examples():
    np.testing.assert_allclose(softmax(np.zeros((1, 3))), [[1 / 3] * 3])
    np.testing.assert_allclose(softmax(np.log([[1.0, 2.0, 3.0]])), [[1 / 6, 2 / 6, 3 / 6]], rtol=1e-12)


@given(logits, st.floats(-100, 100))
def test_softmax_rows(z, c):
    p = softmax(z)
    assert np.all(p > 0)  # logits span at most 100, far from exp underflow
    np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-9)
    np.testing.assert_allclose(softmax(z + c), p, atol=1e-12)
    top2 = np.sort(z, axis=1)[:, -2:]
    clear = top2[:, 1] - top2[:, 0] > 1e-6
    assert np.array_equal(np.argmax(softmax(z + c), axis=1)[clear], np.argmax(z, axis=1)[clear])


def test_cross_entropy_closed_forms():
    assert cross_entropy(np.full((4, 30), 1 / 30), to_onehot([0, 5, 9, 29], 30)) == pytest.approx(math.log(30),
                                                                                                 abs=1e-12)
    assert cross_entropy(np.eye(3), np.eye(3)) == 0.0
    # floored at 1e-12 for a confident miss
    assert cross_entropy(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])) == pytest.approx(-math.log(1e-12))


@given(st.permutations(range(6)), st.integers(0, 2 ** 32 - 1))
def test_cross_entropy_relabel_invariant(perm, seed):
    rng = np.random.default_rng(seed)
    p = softmax(rng.standard_normal((8, 6)))
    y = to_onehot(rng.integers(0, 6, 8), 6)
    assert cross_entropy(p[:, perm], y[:, perm]) == pytest.approx(cross_entropy(p, y), rel=1e-12)


def test_cross_entropy_rejects_bad_onehot():
    for bad in ([[1.0, 1.0]], [[0.5, 0.5]], [[0.0, 0.0]]):
        with pytest.raises(ParameterError):
            cross_entropy(np.array([[0.5, 0.5]]), np.array(bad))
    with pytest.raises(ParameterError):
        to_onehot([3], 3)


# -- layer shapes ------------------------------------------------------------

@pytest.mark.parametrize("size,k,stride,expected", [(81, 3, 1, 81), (81, 5, 3, 27), (27, 5, 3, 9), (3, 5, 3, 1),
                                                    (10, 3, 3, 4)])
def test_conv_same_output(size, k, stride, expected):
    conv = built(Conv2D(2, (k, k), (stride, stride)), (size, size, 1))
    assert conv.output_shape == (expected, expected, 2)
    y, _ = conv.forward(np.ones((1, size, size, 1)), False, None)
    assert y.shape == (1, expected, expected, 2)


def test_conv_matches_direct_correlation(rng):
    conv = built(Conv2D(3, (3, 3), (2, 2), activation="linear"), (6, 5, 2))
    conv.params["b"][...] = rng.standard_normal(3)
    x = rng.standard_normal((2, 6, 5, 2))
    y, _ = conv.forward(x, False, None)
    # same padding for (6, 5) with k 3 stride 2: out (3, 3), pad h (0, 1), pad w (1, 1)
    xp = np.pad(x, ((0, 0), (0, 1), (1, 1), (0, 0)))
    W, b = conv.params["W"], conv.params["b"]
    ref = np.zeros((2, 3, 3, 3))
    for i in range(3):
        for j in range(3):
            patch = xp[:, 2 * i:2 * i + 3, 2 * j:2 * j + 3, :]
            ref[:, i, j, :] = np.einsum("nhwc,hwco->no", patch, W) + b
    np.testing.assert_allclose(y, ref, atol=1e-12)


def test_conv_wide_input_path_matches_narrow(rng):
    narrow = built(Conv2D(4, (3, 3)), (7, 7, 9))
    x = rng.standard_normal((2, 7, 7, 9))
    y_fast, _ = narrow.forward(x, False, None)
    # the same weights applied channel-group by channel-group must agree
    parts = []
    for c0 in (0, 5):
        c1 = min(c0 + 5, 9)
        sub = built(Conv2D(4, (3, 3), activation="linear"), (7, 7, c1 - c0))
        sub.params["W"][...] = narrow.params["W"][:, :, c0:c1, :]
        parts.append(sub.forward(x[..., c0:c1], False, None)[0])
    np.testing.assert_allclose(y_fast, relu(parts[0] + parts[1]), atol=1e-12)


def test_maxpool_ceil_mode():
    pool = built(MaxPool2D((3, 3)), (81, 81, 2))
    assert pool.output_shape == (27, 27, 2)
    pool = built(MaxPool2D((2, 2)), (3, 3, 1))
    x = -np.arange(9.0).reshape(1, 3, 3, 1)
    y, _ = pool.forward(x, False, None)
    assert y[0, :, :, 0].tolist() == [[0, -2], [-6, -8]]


def test_composition_errors():
    with pytest.raises(CompositionError):
        Model([Flatten(), Conv2D(2)], (4, 4, 1)).build()
    with pytest.raises(CompositionError):
        Model([Dense(3, "softmax")], (4, 4, 1)).build()
    m = Model([Flatten(), Dense(2, "softmax")], (4, 4, 1)).build()
    with pytest.raises(CompositionError):
        m.forward(np.zeros((1, 4, 5, 1)))


def test_layer_parameter_validation():
    for make in (lambda: Dropout(1.0), lambda: Dropout(-0.1), lambda: Dense(0), lambda: Dense(3, "tanh"),
                 lambda: Conv2D(0), lambda: MaxPool2D((0, 2))):
        with pytest.raises(ParameterError):
            make()


# -- dropout -----------------------------------------------------------------

def test_dropout_inference_is_identity(rng):
    x = rng.standard_normal((3, 10))
    for rate in (0.0, 0.5, 0.9):
        y, _ = built(Dropout(rate), (10,)).forward(x, False, None)
        assert y is x or np.array_equal(y, x)


def test_dropout_preserves_expectation():
    x = np.linspace(0.5, 2.0, 8)[None, :]
    layer = built(Dropout(0.5), (8,))
    rng = np.random.default_rng(7)
    acc = np.zeros_like(x)
    n = 100_000
    big = np.repeat(x, n, axis=0)
    acc = layer.forward(big, True, rng)[0].mean(axis=0)
    np.testing.assert_allclose(acc, x[0], rtol=0.01)


def test_dropout_mask_scaling(rng):
    y, _ = built(Dropout(0.2), (1000,)).forward(np.ones((1, 1000)), True, rng)
    assert set(np.unique(y)) <= {0.0, 1.25}


# -- model-level gradients ---------------------------------------------------

def test_output_gradient_closed_form(rng):
    m = Model([Flatten(), Dense(4, "softmax")], (2, 3, 1)).build(3)
    x = rng.standard_normal((5, 2, 3, 1))
    y = onehot(rng.integers(0, 4, 5), 4)
    cache = m.forward(x, True, rng)
    gW, gb = m.backward(cache, y)
    dz = (cache.output - y) / 5
    np.testing.assert_allclose(gb, dz.sum(axis=0), atol=1e-15)
    np.testing.assert_allclose(gW, x.reshape(5, -1).T @ dz, atol=1e-15)


def test_linear_model_gradient_near_exact(rng):
    m = Model([Flatten(), Dense(3, "softmax")], (2, 2, 1)).build(0)
    res = gradient_check(m, rng.standard_normal((4, 2, 2, 1)), onehot([0, 1, 2, 1], 3), check_input=True)
    assert res.max_rel_error < 1e-8


def test_reduced_cnn_gradient_check(rng):
    m = reduced_model()
    x = rng.standard_normal((3, 9, 9, 1))
    res = gradient_check(m, x, onehot([0, 3, 4], 5), seed=5, check_input=True)
    kinds = {name.split(":")[1].split(".")[0] for name in res.errors if name != "input"}
    assert kinds == {"conv2d", "dense"}
    assert res.margin >= 1e-4
    assert res.max_rel_error < 1e-4, res.errors


@pytest.mark.parametrize("layer,shape", [
    (Conv2D(32, (3, 3), (1, 1)), (5, 5, 1)),
    (Conv2D(32, (3, 3), (1, 1)), (5, 5, 32)),
    (Conv2D(64, (3, 3), (1, 1)), (4, 4, 32)),
    (Conv2D(64, (5, 5), (3, 3)), (7, 7, 64)),
    (Conv2D(128, (5, 5), (3, 3)), (5, 5, 64)),
    (Conv2D(128, (5, 5), (3, 3)), (3, 3, 128)),
    (MaxPool2D((3, 3)), (7, 7, 4)),
    (Dropout(0.2), (4, 4, 3)),
    (Dropout(0.6), (20,)),
    (Flatten(), (3, 3, 2)),
    (Dense(1024, "relu", max_norm=3.0), (128,)),
    (Dense(128, "relu", max_norm=3.0), (1024,)),
    (Dense(30, "softmax"), (128,)),
], ids=lambda v: repr(v) if not isinstance(v, tuple) else "x".join(map(str, v)))
def test_layer_gradients_at_full_configuration(layer, shape, rng):
    built(layer, shape)
    if "b" in layer.params:
        layer.params["b"][...] = rng.uniform(-0.1, 0.1, layer.params["b"].shape)
    x = rng.standard_normal((2,) + shape)
    res = gradient_check_layer(layer, x, seed=3, max_entries=150)
    assert res.max_rel_error < 1e-4, res.errors


def test_backward_determinism_without_dropout(rng):
    m = Model([Conv2D(3), Flatten(), Dense(4, "softmax")], (4, 4, 1)).build(2)
    x, y = rng.standard_normal((2, 4, 4, 1)), onehot([1, 3], 4)
    a = m.backward(m.forward(x, True, np.random.default_rng(0)), y)
    b = m.backward(m.forward(x, True, np.random.default_rng(99)), y)
    for ga, gb in zip(a, b):
        assert np.array_equal(ga, gb)


def test_stale_cache_rejected(rng):
    m = Model([Flatten(), Dense(2, "softmax")], (2, 2, 1)).build()
    x, y = rng.standard_normal((1, 2, 2, 1)), onehot([0], 2)
    with pytest.raises(StaleCacheError):
        m.backward(m.forward(x, False), y)
    cache = m.forward(x, True, rng)
    SGD().step(m.parameters(), m.backward(cache, y))
    m.apply_constraints()
    with pytest.raises(StaleCacheError):
        m.backward(cache, y)


def test_training_forward_needs_rng(rng):
    m = Model([Flatten(), Dense(2, "softmax")], (2, 2, 1)).build()
    with pytest.raises(ParameterError):
        m.forward(np.zeros((1, 2, 2, 1)), training=True)


# -- optimizers and max-norm ---------------------------------------------------

def test_sgd_example():
    p = np.array([1.0])
    SGD(lr=0.1).step([p], [np.array([0.5])])
    assert p[0] == 0.95


def test_adadelta_first_step():
    p = np.array([0.0])
    AdaDelta().step([p], [np.array([1.0])])
    assert -p[0] == pytest.approx(math.sqrt(1e-6) / math.sqrt(0.05 + 1e-6), rel=1e-12)
    assert -p[0] == pytest.approx(0.0044721, abs=1e-7)


def test_adam_first_step_is_lr_sized():
    p = np.array([0.0, 0.0])
    Adam().step([p], [np.array([3.0, -0.2])])
    np.testing.assert_allclose(p, [-1e-3, 1e-3], rtol=1e-6)


@pytest.mark.parametrize("name", ["sgd", "adam", "adadelta"])
def test_zero_gradient_leaves_params(name, rng):
    p = rng.standard_normal((3, 4))
    before = p.copy()
    opt = make_optimizer(name)
    for _ in range(3):
        opt.step([p], [np.zeros_like(p)])
    assert np.array_equal(p, before)


def test_optimizer_rejects_nan_and_shape():
    p = np.zeros(3)
    with pytest.raises(NumericFailureError):
        SGD().step([p], [np.array([0.0, np.nan, 0.0])])
    with pytest.raises(ParameterError):
        SGD().step([p], [np.zeros(4)])
    with pytest.raises(ParameterError):
        make_optimizer("rmsprop")


def test_max_norm_examples():
    w = np.array([[6.0, 2.0], [0.0, 0.0]])
    np.testing.assert_allclose(apply_max_norm(w, 3.0), [[3.0, 2.0], [0.0, 0.0]])
    with pytest.raises(ParameterError):
        apply_max_norm(w, 0)


@given(arrays(np.float64, (6, 4), elements=st.floats(-10, 10)), st.floats(0.1, 5))
def test_max_norm_idempotent_and_bounded(w, bound):
    once = apply_max_norm(w, bound)
    assert np.all(np.linalg.norm(once, axis=0) <= bound * (1 + 1e-12))
    np.testing.assert_allclose(apply_max_norm(once, bound), once, rtol=1e-12, atol=1e-300)


@pytest.mark.parametrize("name", ["sgd", "adam", "adadelta"])
def test_max_norm_holds_after_steps(name, rng):
    m = Model([Flatten(), Dense(16, "relu", max_norm=3.0), Dense(4, "softmax")], (3, 3, 1)).build(0)
    opt = make_optimizer(name, lr=5.0) if name == "sgd" else make_optimizer(name)
    for _ in range(100):
        optimizer_step(m, opt, [50 * rng.standard_normal(p.shape) for p in m.parameters()])
        assert np.linalg.norm(m.layers[1].params["W"], axis=0).max() <= 3 + 1e-9


# -- training ----------------------------------------------------------------

def _toy(rng, n=24):
    x = rng.standard_normal((n, 4, 4, 1))
    y = (x[:, :2].sum(axis=(1, 2, 3)) > 0).astype(int)
    return x, onehot(y, 2)


def _toy_model():
    return Model([Conv2D(4), Dropout(0.3), Flatten(), Dense(8, "relu", max_norm=3.0),
                  Dense(2, "softmax")], (4, 4, 1)).build(11).compile("adadelta")


def test_fit_is_bit_reproducible(rng):
    x, y = _toy(rng)
    h1 = fit(_toy_model(), x, y, TrainConfig(epochs=3, batch_size=5, seed=4))
    h2 = fit(_toy_model(), x, y, TrainConfig(epochs=3, batch_size=5, seed=4))
    assert h1.loss == h2.loss and h1.accuracy == h2.accuracy
    h3 = fit(_toy_model(), x, y, TrainConfig(epochs=1, batch_size=5, seed=5))
    assert h3.loss[0] != h1.loss[0]


def test_fit_learns_and_records_validation(rng):
    x, y = _toy(rng, 64)
    m = Model([Flatten(), Dense(16, "relu"), Dense(2, "softmax")], (4, 4, 1)).build(0).compile("adam", lr=0.01)
    h = fit(m, x, y, TrainConfig(epochs=60, batch_size=16, validation=(x, y)))
    assert h.epochs_run == 60 and len(h.val_top3) == 60
    assert h.val_accuracy[-1] >= 0.95 and h.loss[-1] < h.loss[0]


def test_fit_early_stop(rng):
    x, y = _toy(rng, 64)
    m = Model([Flatten(), Dense(16, "relu"), Dense(2, "softmax")], (4, 4, 1)).build(0).compile("adam", lr=0.05)
    h = fit(m, x, y, TrainConfig(epochs=500, batch_size=16, stop_accuracy=0.9))
    assert h.epochs_run < 500 and h.accuracy[-1] >= 0.9


def test_fit_preconditions(rng):
    x, y = _toy(rng)
    with pytest.raises(ParameterError):
        TrainConfig(epochs=0)
    with pytest.raises(ParameterError):
        TrainConfig(batch_size=0)
    m = Model([Flatten(), Dense(2, "softmax")], (4, 4, 1)).build()
    with pytest.raises(ParameterError):
        fit(m, x, y)  # not compiled
    m.compile("sgd")
    with pytest.raises(ParameterError):
        fit(m, x, onehot([0] * 24, 3))
    with pytest.raises(ParameterError):
        fit(m, x[:0], y[:0])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_fit_reports_numeric_failure(rng):
    x, y = _toy(rng)
    m = Model([Flatten(), Dense(2, "softmax")], (4, 4, 1)).build().compile("sgd")
    m.layers[1].params["W"][0, 0] = np.inf
    with pytest.raises(NumericFailureError):
        fit(m, x, y, TrainConfig(epochs=1))


# -- prediction --------------------------------------------------------------

def test_predict_uniform_with_zero_head(rng):
    m = reduced_model()
    m.layers[-1].params["W"][...] = 0
    m.layers[-1].params["b"][...] = 0
    np.testing.assert_allclose(m.predict(rng.standard_normal((3, 9, 9, 1))), 0.2, atol=1e-15)


def test_predict_deterministic_and_rate_free(rng):
    m = reduced_model()
    x = rng.standard_normal((70, 9, 9, 1))
    p = m.predict(x)
    assert np.array_equal(p, m.predict(x))
    np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-9)
    for layer in m.layers:
        if isinstance(layer, Dropout):
            layer.rate = 0.0
    assert np.array_equal(p, m.predict(x))
    assert m.predict(x[:0]).shape == (0, 5)


# -- persistence ---------------------------------------------------------------

def test_save_load_bit_exact(tmp_path, rng):
    m = reduced_model()
    m.compile("adam", lr=0.002)
    m.meta = {"note": "x", "split_seed": 3}
    save_model(m, tmp_path / "m.phnm")
    back = load_model(tmp_path / "m.phnm")
    for a, b in zip(m.parameters(), back.parameters()):
        assert a.tobytes() == b.tobytes()
    x = rng.standard_normal((4, 9, 9, 1))
    assert np.array_equal(m.predict(x), back.predict(x))
    assert back.meta == m.meta and back.optimizer.hyper["lr"] == 0.002
    assert [type(layer) for layer in back.layers] == [type(layer) for layer in m.layers]


def test_load_rejects_corruption(tmp_path):
    m = Model([Flatten(), Dense(2, "softmax")], (2, 2, 1)).build()
    p = tmp_path / "m.phnm"
    save_model(m, p)
    raw = p.read_bytes()
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ModelFormatError):
        load_model(p)
    p.write_bytes(raw[:4] + struct.pack("<I", 99) + raw[8:])
    with pytest.raises(UnsupportedVersionError):
        load_model(p)
    p.write_bytes(raw[:-3])
    with pytest.raises(TruncatedFileError):
        load_model(p)
    with pytest.raises(OSError):
        load_model(p)
