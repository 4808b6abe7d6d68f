"""PHNM model files.

Layout (little-endian): ``b"PHNM"``, u32 version, u32 descriptor length,
UTF-8 JSON descriptor, then each layer's parameters as raw float64 blobs in
layer order (``W`` before ``b``). Shapes come from rebuilding the
architecture described in the JSON.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ModelFormatError, TruncatedFileError, UnsupportedVersionError
from .layers import layer_from_config
from .model import Model

MAGIC = b"PHNM"
VERSION = 1


def save_model(model: Model, path) -> None:
    desc = {
        "input_shape": list(model.input_shape),
        "layers": [layer.config() for layer in model.layers],
        "class_labels": model.class_labels,
        "compile": {
            "loss": model.loss,
            "metrics": list(model.metrics),
            "optimizer": None if model.optimizer is None else
            {"kind": model.optimizer.kind, **model.optimizer.hyper},
        },
        "meta": model.meta,
    }
    blob = json.dumps(desc, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for p in model.parameters():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_model(path) -> Model:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise TruncatedFileError(f"{path}: header truncated")
    if raw[:4] != MAGIC:
        raise ModelFormatError(f"{path}: bad magic {raw[:4]!r}")
    version, n = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: model file version {version}, this build reads {VERSION}")
    if len(raw) < 12 + n:
        raise TruncatedFileError(f"{path}: descriptor truncated")
    try:
        desc = json.loads(raw[12:12 + n].decode("utf-8"))
        layers = [layer_from_config(c) for c in desc["layers"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"{path}: unreadable descriptor ({exc})") from None
    model = Model(layers, desc["input_shape"], desc.get("class_labels")).build(0)
    pos = 12 + n
    for p in model.parameters():
        size = p.size * 8
        if len(raw) < pos + size:
            raise TruncatedFileError(f"{path}: weights truncated")
        p[...] = np.frombuffer(raw[pos:pos + size], dtype="<f8").reshape(p.shape)
        pos += size
    comp = desc.get("compile") or {}
    opt = comp.get("optimizer")
    if opt:
        opt = dict(opt)
        model.compile(opt.pop("kind"), comp.get("loss", "categorical_crossentropy"),
                      comp.get("metrics", ["accuracy"]), **opt)
    model.meta = desc.get("meta") or {}
    model.mark_updated()
    return model
