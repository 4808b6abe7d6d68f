"""Figures written to files (PNG/PDF/SVG by extension) with a headless backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dsp import LOG_FLOOR, Spectrogram, log_spectrogram  # noqa: E402
from .evaluation import ClassReport, ConfusionMatrix  # noqa: E402


def _show_spec(ax, spec: Spectrogram, title: str, top_db: float = 80.0):
    db = log_spectrogram(spec, LOG_FLOOR)
    db = np.maximum(db, db.max() - top_db)
    t_end = spec.power.shape[0] * spec.frame_period
    f_end = spec.f_start + spec.power.shape[1] * spec.bin_width
    im = ax.imshow(db.T, origin="lower", aspect="auto", cmap="magma",
                   extent=(0.0, t_end, spec.f_start, f_end))
    ax.set_title(title)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("frequency (Hz)")
    return im


def plot_spectrogram_pair(before: Spectrogram, after: Spectrogram, path, f_max: float | None = 8000.0) -> None:
    """Side-by-side dB spectrograms, e.g. before and after denoising."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, spec, title in zip(axes, (before, after), ("before", "after")):
        im = _show_spec(ax, spec, title)
        if f_max is not None:
            ax.set_ylim(spec.f_start, f_max)
    axes[1].set_ylabel("")
    fig.colorbar(im, ax=axes, label="dB")
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_confusion(cm: ConfusionMatrix, path) -> None:
    k = cm.num_classes
    fig, ax = plt.subplots(figsize=(0.25 * k + 3, 0.25 * k + 2.5))
    im = ax.imshow(cm.counts, cmap="Blues", interpolation="nearest")
    ax.set_xticks(range(k), cm.labels, rotation=90, fontsize=7)
    ax.set_yticks(range(k), cm.labels, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    fig.colorbar(im, ax=ax, label="count")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_f1_bars(report: ClassReport, path) -> None:
    k = len(report.labels)
    fig, ax = plt.subplots(figsize=(0.3 * k + 2, 3.5))
    ax.bar(range(k), report.f1, color="tab:blue")
    ax.axhline(report.weighted()[2], color="tab:red", linestyle="--", label="weighted avg")
    ax.set_xticks(range(k), report.labels, rotation=90, fontsize=7)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("F1")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_history(history, path) -> None:
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ep = np.arange(1, history.epochs_run + 1)
    a1.plot(ep, history.loss, label="train")
    if history.val_loss:
        a1.plot(ep, history.val_loss, label="test")
    a1.set_xlabel("epoch")
    a1.set_ylabel("cross-entropy")
    a1.legend()
    a2.plot(ep, history.accuracy, label="train")
    if history.val_accuracy:
        a2.plot(ep, history.val_accuracy, label="test top-1")
        a2.plot(ep, history.val_top3, label="test top-3")
    a2.set_xlabel("epoch")
    a2.set_ylabel("accuracy")
    a2.set_ylim(0.0, 1.02)
    a2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
