"""``phonemekit`` command-line interface.

Exit status: 0 success, 1 user error (bad flags, missing or malformed
input), 2 internal or numeric failure. Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import read_wav, write_wav
from .dataset import LABELS, read_manifest, scan_corpus, stratified_split, synth_corpus, write_manifest
from .denoise import denoise, format_spans, segment_cv, trim_vowel
from .dsp import mfcc, power_spectrogram, save_matrix_blob, save_matrix_csv, stft
from .errors import NumericFailureError, PhonemeKitError
from .evaluation import confusion, format_report, precision_recall_f1, report_csv, top_k_accuracy, top_k_labels
from .features import FeatureConfig, export_pgm, featurize
from .nn import TrainConfig, fit, load_model, make_optimizer, save_model, to_onehot
from .nn.train import History
from .phoneme_net import build_phoneme_cnn
from .pipeline import PipelineConfig, clip_image, featurize_paths, prepare_clip

log = logging.getLogger("phonemekit")

DEFAULTS = {
    "optimizer": "adadelta",
    "optimizer_hyper": {},
    "epochs": 150,
    "batch_size": 32,
    "seed": 42,
    "test_fraction": 0.2,
    "stop_accuracy": None,
    "pipeline": {},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclasses.dataclass
class RunConfig:
    command: str
    pipeline: PipelineConfig
    train: TrainConfig
    optimizer: str
    optimizer_hyper: dict
    test_fraction: float
    args: argparse.Namespace


def _feature_flags(p):
    p.add_argument("--front-end", choices=("stft", "mfcc"))
    p.add_argument("--binarize", action="store_true", default=None, help="threshold feature images at 0.5")
    p.add_argument("--no-denoise", action="store_true", help="skip spectral subtraction")
    p.add_argument("--no-trim", action="store_true", help="keep the full vowel")


def _config_flag(p):
    p.add_argument("--config", type=Path, help="JSON run configuration; flags override it")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="phonemekit", description="Phoneme classification from CV syllable recordings.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic CV corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--sample-rate", type=int, default=44100)

    p = sub.add_parser("extract", help="feature image or matrix for one WAV (or a corpus)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--wav", type=Path)
    src.add_argument("--corpus", type=Path, help="write one PGM per clip under --out")
    p.add_argument("--out", type=Path, required=True, help=".pgm, .csv or .bin (blob) for --wav; a directory for --corpus")
    p.add_argument("--matrix", action="store_true",
                   help="write the raw spectrogram/MFCC matrix instead of the conditioned image")
    _feature_flags(p)
    _config_flag(p)

    p = sub.add_parser("denoise", help="spectral subtraction WAV -> WAV")
    p.add_argument("--wav", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--passes", type=int, default=2)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--beta", type=float, default=0.02)
    p.add_argument("--trim", action="store_true", help="also shorten the vowel and print the segments")
    p.add_argument("--plot", type=Path, help="before/after spectrogram figure")

    p = sub.add_parser("train", help="train the CNN on a corpus")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--optimizer", choices=("sgd", "adam", "adadelta"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--stop-accuracy", type=float, help="stop once training accuracy reaches this value")
    p.add_argument("--track-test", action="store_true", help="score the held-out split after every epoch")
    p.add_argument("--manifest", type=Path, help="also write the train/test split as CSV")
    _feature_flags(p)
    _config_flag(p)

    for name, text in (("evaluate", "score a model on its held-out split"),
                       ("report", "evaluation tables plus figures in a directory")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--corpus", type=Path, required=True)
        p.add_argument("--model", type=Path, required=True)
        p.add_argument("--split", choices=("test", "train", "all"), default="test")
        p.add_argument("--manifest", type=Path, help="use this split instead of re-deriving it")
        if name == "evaluate":
            p.add_argument("--out", type=Path, help="write the text table here instead of stdout")
            p.add_argument("--csv", type=Path, help="also write the table as CSV")
        else:
            p.add_argument("--out", type=Path, required=True, help="output directory")
            p.add_argument("--wav", type=Path, help="clip for the denoising figure (default: first test clip)")
        p.add_argument("--top", type=int, default=3)

    p = sub.add_parser("predict", help="rank phoneme classes for one WAV")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--wav", type=Path, required=True)
    p.add_argument("--top", type=int, default=3)
    return ap


def _load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def resolve_config(args) -> RunConfig:
    """Merge defaults, the optional JSON file and explicit flags (flags win)."""
    cfg = json.loads(json.dumps(DEFAULTS))
    if getattr(args, "config", None):
        doc = _load_json(args.config)
        unknown = set(doc) - set(cfg)
        if unknown:
            raise UsageError(f"{args.config}: unknown keys {sorted(unknown)}")
        cfg.update(doc)
    for key in ("optimizer", "epochs", "batch_size", "seed", "test_fraction", "stop_accuracy"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    pipe = dict(cfg["pipeline"])
    feats = dict(pipe.get("features", {}))
    if getattr(args, "front_end", None):
        feats["front_end"] = args.front_end
    if getattr(args, "binarize", None):
        feats["binarize"] = True
    if getattr(args, "no_denoise", False):
        pipe["denoise"] = False
    if getattr(args, "no_trim", False):
        pipe["trim"] = False
    pipe["features"] = feats
    try:
        pipeline = PipelineConfig.from_dict(pipe)
    except TypeError as exc:
        raise UsageError(f"bad pipeline configuration: {exc}") from None
    train = TrainConfig(epochs=cfg["epochs"], batch_size=cfg["batch_size"], seed=cfg["seed"],
                        stop_accuracy=cfg["stop_accuracy"])
    return RunConfig(args.command, pipeline, train, cfg["optimizer"], dict(cfg["optimizer_hyper"]),
                     cfg["test_fraction"], args)


def _require_file(path, what):
    if not Path(path).is_file():
        raise UsageError(f"{what} {path} does not exist")


def _require_dir(path, what):
    if not Path(path).is_dir():
        raise UsageError(f"{what} {path} does not exist")


# -- commands ----------------------------------------------------------------

def cmd_synth(rc: RunConfig) -> int:
    a = rc.args
    corpus = synth_corpus(a.out, a.per_class, a.seed, a.sample_rate)
    print(f"wrote {len(corpus)} clips for {len(corpus.counts())} classes under {a.out}")
    return 0


def _write_matrix(mat, out: Path):
    suffix = out.suffix.lower()
    if suffix == ".pgm":
        export_pgm(mat, out)
    elif suffix == ".csv":
        save_matrix_csv(mat, out)
    elif suffix in (".bin", ".blob", ".spec"):
        save_matrix_blob(mat, out)
    else:
        raise UsageError(f"cannot infer output format from {out.name!r}; use .pgm, .csv or .bin")


def cmd_extract(rc: RunConfig) -> int:
    a = rc.args
    cfg = rc.pipeline
    if a.corpus is not None:
        _require_dir(a.corpus, "corpus")
        corpus = scan_corpus(a.corpus)
        for e in corpus.entries:
            dest = a.out / e.label.ascii_name / (e.path.stem + ".pgm")
            dest.parent.mkdir(parents=True, exist_ok=True)
            export_pgm(clip_image(read_wav(e.path), cfg), dest)
        print(f"wrote {len(corpus)} images under {a.out}")
        return 0
    _require_file(a.wav, "input")
    clip = read_wav(a.wav)
    if a.matrix:
        f = cfg.features
        if f.front_end == "stft":
            mat = power_spectrogram(stft(clip, f.stft_params)).power
        else:
            mat = mfcc(clip, f.stft_params, f.n_mels, f.n_coeffs)
        if a.out.suffix.lower() == ".pgm":
            raise UsageError("raw matrices are not images; write .csv or .bin")
    else:
        mat = clip_image(clip, cfg)
    _write_matrix(mat, a.out)
    print(f"{a.out}: {mat.shape[0]} x {mat.shape[1]}")
    return 0


def cmd_denoise(rc: RunConfig) -> int:
    a = rc.args
    _require_file(a.wav, "input")
    if a.out.resolve() == a.wav.resolve():
        raise UsageError("refusing to overwrite the input file")
    params = rc.pipeline.features.stft_params
    clip = read_wav(a.wav)
    clean = denoise(clip, a.passes, a.alpha, a.beta, params=params)
    if a.trim:
        spans = segment_cv(clean, params)
        sys.stdout.write(format_spans(spans))
        if any(s.kind == "vowel" for s in spans):
            clean = trim_vowel(clean, spans, rc.pipeline.max_vowel)
    write_wav(clean, a.out)
    if a.plot:
        from .plotting import plot_spectrogram_pair

        plot_spectrogram_pair(power_spectrogram(stft(clip, params)), power_spectrogram(stft(clean, params)), a.plot)
    print(f"wrote {a.out} ({clean.duration:.3f} s)")
    return 0


def _split(corpus_root, seed, test_fraction, manifest=None):
    if manifest is not None:
        _require_file(manifest, "manifest")
        return read_manifest(manifest)
    corpus = scan_corpus(corpus_root)
    if not corpus.entries:
        raise UsageError(f"no labelled WAV files under {corpus_root}")
    return stratified_split(corpus, test_fraction, seed)


def _xy(entries, cfg):
    x = featurize_paths([e.path for e in entries], cfg)
    y = np.array([e.label.index for e in entries], dtype=np.int64)
    return x, y


def cmd_train(rc: RunConfig) -> int:
    a = rc.args
    _require_dir(a.corpus, "corpus")
    start = time.perf_counter()
    corpus = _split(a.corpus, rc.train.seed, rc.test_fraction)
    if a.manifest:
        write_manifest(corpus, a.manifest)
    train, test = corpus.subset("train"), corpus.subset("test")
    log.info("featurizing %d training and %d test clips", len(train), len(test))
    x, y = _xy(train, rc.pipeline)
    k = len(LABELS)
    if a.track_test and test:
        xt, yt = _xy(test, rc.pipeline)
        rc.train.validation = (xt, to_onehot(yt, k))
    f = rc.pipeline.features
    model = build_phoneme_cnn((f.out_height, f.out_width, 1), k, seed=rc.train.seed,
                              class_labels=[lab.ascii_name for lab in LABELS])
    model.compile(make_optimizer(rc.optimizer, **rc.optimizer_hyper))
    hist = fit(model, x, to_onehot(y, k), rc.train)
    model.meta = {
        "pipeline": rc.pipeline.to_dict(),
        "split_seed": rc.train.seed,
        "test_fraction": rc.test_fraction,
        "train": {"epochs": rc.train.epochs, "batch_size": rc.train.batch_size, "seed": rc.train.seed,
                  "optimizer": rc.optimizer, "optimizer_hyper": rc.optimizer_hyper},
        "history": dataclasses.asdict(hist),
    }
    save_model(model, a.model)
    print(f"trained {hist.epochs_run} epochs in {time.perf_counter() - start:.1f} s; "
          f"final loss {hist.loss[-1]:.4f}, training accuracy {hist.accuracy[-1]:.4f}")
    if hist.val_accuracy:
        print(f"held-out top-1 {hist.val_accuracy[-1]:.4f}, top-3 {hist.val_top3[-1]:.4f}")
    print(f"saved {a.model}")
    return 0


def _load(path):
    _require_file(path, "model")
    model = load_model(path)
    pipe = model.meta.get("pipeline")
    cfg = PipelineConfig.from_dict(pipe) if pipe else PipelineConfig()
    return model, cfg


def _score(rc: RunConfig):
    a = rc.args
    _require_dir(a.corpus, "corpus")
    model, cfg = _load(a.model)
    corpus = _split(a.corpus, model.meta.get("split_seed", 42), model.meta.get("test_fraction", 0.2), a.manifest)
    entries = corpus.entries if a.split == "all" else corpus.subset(a.split)
    if not entries:
        raise UsageError(f"the {a.split} split is empty")
    x, y = _xy(entries, cfg)
    probs = model.predict(x)
    labels = model.class_labels or [lab.ascii_name for lab in LABELS]
    cm = confusion(probs.argmax(axis=1), y, model.num_classes, labels)
    return model, cfg, entries, probs, y, cm


def _summary_lines(probs, y, top):
    lines = [f"top-1 accuracy {top_k_accuracy(probs, y, 1):.4f}"]
    if top > 1:
        lines.append(f"top-{top} accuracy {top_k_accuracy(probs, y, top):.4f}")
    return "\n".join(lines) + "\n"


def cmd_evaluate(rc: RunConfig) -> int:
    a = rc.args
    _, _, entries, probs, y, cm = _score(rc)
    report = precision_recall_f1(cm)
    text = format_report(report) + "\n" + _summary_lines(probs, y, a.top)
    if a.out:
        a.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if a.csv:
        a.csv.write_text(report_csv(report), encoding="utf-8")
    return 0


def cmd_report(rc: RunConfig) -> int:
    from .plotting import plot_confusion, plot_f1_bars, plot_history, plot_spectrogram_pair

    a = rc.args
    model, cfg, entries, probs, y, cm = _score(rc)
    out = a.out
    out.mkdir(parents=True, exist_ok=True)
    report = precision_recall_f1(cm)
    text = format_report(report) + "\n" + _summary_lines(probs, y, a.top)
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.csv").write_text(report_csv(report), encoding="utf-8")
    np.savetxt(out / "confusion.csv", cm.counts, fmt="%d", delimiter=",",
               header=",".join(cm.labels), comments="")
    plot_confusion(cm, out / "confusion.png")
    plot_f1_bars(report, out / "f1.png")
    written = ["report.txt", "report.csv", "confusion.csv", "confusion.png", "f1.png"]
    if model.meta.get("history"):
        plot_history(History(**model.meta["history"]), out / "history.png")
        written.append("history.png")
    wav = a.wav if a.wav is not None else entries[0].path
    _require_file(wav, "input")
    params = cfg.features.stft_params
    clip = read_wav(wav)
    plot_spectrogram_pair(power_spectrogram(stft(clip, params)),
                          power_spectrogram(stft(prepare_clip(clip, dataclasses.replace(cfg, trim=False)), params)),
                          out / "denoise.png")
    written.append("denoise.png")
    sys.stdout.write(text)
    for name in written:
        print(out / name)
    return 0


def cmd_predict(rc: RunConfig) -> int:
    a = rc.args
    _require_file(a.wav, "input")
    model, cfg = _load(a.model)
    if not 1 <= a.top <= model.num_classes:
        raise UsageError(f"--top must lie in [1, {model.num_classes}]")
    probs = model.predict(clip_image(read_wav(a.wav), cfg)[None, :, :, None])[0]
    labels = model.class_labels or [str(i) for i in range(model.num_classes)]
    for rank, (idx, p) in enumerate(top_k_labels(probs, a.top), start=1):
        print(f"{rank} {labels[idx]} {p:.6f}")
    return 0


COMMANDS = {
    "synth": cmd_synth, "extract": cmd_extract, "denoise": cmd_denoise, "train": cmd_train,
    "evaluate": cmd_evaluate, "report": cmd_report, "predict": cmd_predict,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](resolve_config(args))
    except NumericFailureError as exc:
        print(f"phonemekit: numeric failure: {exc}", file=sys.stderr)
        return 2
    except (UsageError, PhonemeKitError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"phonemekit: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.debug("internal failure", exc_info=True)
        print(f"phonemekit: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
