import numpy as np
import pytest

from cotswitch.core import Embedding, Query, TrainingExample
from cotswitch.llm.mock import mock_backend, planted_corpus
from cotswitch.switcher import SwitcherArchitecture, SwitcherModel, TrainConfig, train


@pytest.fixture
def corpus():
    return planted_corpus(60, seed=3)


@pytest.fixture
def backend(corpus):
    return mock_backend(corpus, noise_seed=0)


@pytest.fixture
def tiny_arch():
    return SwitcherArchitecture(input_dim=8, hidden_dims=(16, 8), dropout_rate=0.0)


@pytest.fixture
def tiny_model(tiny_arch):
    return SwitcherModel.init(tiny_arch, seed=0)


def make_examples(n, dim=8, k=8, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        y_sc = rng.integers(0, k + 1) / k
        y_lc = rng.integers(0, k + 1) / k
        out.append(TrainingExample(f"e{i}", Embedding(rng.standard_normal(dim)), float(y_sc), float(y_lc), k))
    return out


@pytest.fixture(scope="session")
def small_trained():
    """A quickly trained small switcher on a 300-query mock corpus."""
    from cotswitch.data.builder import build_dataset

    corpus = planted_corpus(300, seed=11)
    be = mock_backend(corpus, noise_seed=0)
    data, _ = build_dataset(corpus, 8, be)
    cfg = TrainConfig(seed=0, hidden_dims=(64, 32), max_epochs=40, batch_size=32)
    model, history = train(data, cfg)
    return corpus, be, model, history


def query(qid="q", text="What is 1 + 1?", gold="2", d=None):
    return Query(qid, text, gold, d)


# acceptance criteria append (number, passed, detail) here; printed at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
