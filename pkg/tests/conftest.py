import time
from typing import NamedTuple

import numpy as np
import pytest
from acceptance_log import RESULTS
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class DeskCorpus(NamedTuple):
    corpus: object
    x: np.ndarray
    y: np.ndarray
    split: np.ndarray
    seconds: float  # synthesis plus featurization wall time


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory):
    """30 classes x 20 synthetic clips (seed 42), split 80/20 and featurized."""
    from phonemekit.dataset import stratified_split, synth_corpus
    from phonemekit.pipeline import PipelineConfig, featurize_paths

    start = time.perf_counter()
    root = tmp_path_factory.mktemp("desk") / "corpus"
    corpus = stratified_split(synth_corpus(root, per_class=20, seed=42), 0.2, 42)
    x = featurize_paths([e.path for e in corpus.entries], PipelineConfig())
    y = np.array([e.label.index for e in corpus.entries])
    split = np.array([e.split for e in corpus.entries])
    return DeskCorpus(corpus, x, y, split, time.perf_counter() - start)


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
