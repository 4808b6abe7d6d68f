"""The deep CNN used for phoneme classification."""

from __future__ import annotations

from typing import Optional, Sequence

from .errors import CompositionError, ParameterError
from .nn import Conv2D, Dense, Dropout, Flatten, MaxPool2D, Model

DEFAULT_INPUT_SHAPE = (81, 81, 1)
DEFAULT_NUM_CLASSES = 30


def phoneme_cnn_layers(num_classes: int, filters: Sequence[int] = (32, 32, 64, 64, 128, 128),
                       dense_units: Sequence[int] = (1024, 128), conv_stride: int = 3,
                       pool: int = 3) -> list:
    """Layer stack of the phoneme CNN.

    ``filters``, ``dense_units``, ``conv_stride`` and ``pool`` only exist so
    tests can build a shrunken twin; the defaults are the real architecture.
    """
    f1, f2, f3, f4, f5, f6 = filters
    d1, d2 = dense_units
    s = (conv_stride, conv_stride)
    p = (pool, pool)
    return [
        Conv2D(f1, (3, 3), (1, 1), "relu"),
        Dropout(0.2),
        Conv2D(f2, (3, 3), (1, 1), "relu"),
        MaxPool2D(p),
        Conv2D(f3, (3, 3), (1, 1), "relu"),
        Dropout(0.2),
        Conv2D(f4, (5, 5), s, "relu"),
        MaxPool2D(p),
        Conv2D(f5, (5, 5), s, "relu"),
        Dropout(0.2),
        Conv2D(f6, (5, 5), s, "relu"),
        MaxPool2D(p),
        Flatten(),
        Dropout(0.5),
        Dense(d1, "relu", max_norm=3.0),
        Dropout(0.5),
        Dense(d2, "relu", max_norm=3.0),
        Dropout(0.6),
        Dense(num_classes, "softmax"),
    ]


def build_phoneme_cnn(input_shape=DEFAULT_INPUT_SHAPE, num_classes: int = DEFAULT_NUM_CLASSES,
                      seed: int = 0, class_labels: Optional[Sequence[str]] = None, **overrides) -> Model:
    """Build and initialise the CNN for ``input_shape`` (H, W, 1).

    Raises :class:`CompositionError` naming the stage if the spatial size
    would collapse below 1x1.
    """
    if num_classes < 1:
        raise ParameterError("num_classes must be >= 1")
    if len(input_shape) != 3:
        raise CompositionError(f"input shape must be (H, W, 1), got {tuple(input_shape)}")
    if input_shape[2] != 1:
        raise CompositionError(f"the network takes single-channel images, got {input_shape[2]} channels")
    model = Model(phoneme_cnn_layers(num_classes, **overrides), input_shape, class_labels)
    return model.build(seed)
