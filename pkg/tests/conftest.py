import pathlib

import numpy as np
import pytest

from gmmcodec.modelfile import load_model

REPO = pathlib.Path(__file__).resolve().parent.parent
MODEL_PATH = REPO / "models" / "toy-k3-n128.gmmp"
DATA_DIR = pathlib.Path(__file__).resolve().parent / "data"
CORPUS_CSV = REPO / "data" / "table1_corpus.csv"


@pytest.fixture(scope="session")
def model():
    return load_model(MODEL_PATH)


@pytest.fixture
def rng():
    return np.random.default_rng(0x5EED)


ACCEPTANCE_LINES = []


def record_acceptance(line: str):
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
