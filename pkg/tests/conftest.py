import csv
import os
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from gkcoarsen.graph import Graph, generate_sbm

FIXTURES = Path(__file__).parent / "fixtures"
DATA_ROOT = Path(os.environ.get("GK_DATA_ROOT", Path(__file__).resolve().parents[1] / "data"))


def dataset_dir(name: str) -> Path:
    """Location of a converted dataset; override the root with GK_DATA_ROOT."""
    return DATA_ROOT / name


def random_graph(rng: np.random.Generator, n: int, n_features: int = 3, n_classes: int = 2,
                 density: float = 0.4, weighted: bool = False) -> Graph:
    upper = np.triu(rng.random((n, n)) < density, k=1)
    w = rng.uniform(0.5, 2.0, size=(n, n)) if weighted else np.ones((n, n))
    a = np.where(upper, w, 0.0)
    a = a + a.T
    labels = np.arange(n) % n_classes
    rng.shuffle(labels)
    train = np.zeros(n, dtype=bool)
    train[: max(1, n // 2)] = True
    val = np.zeros(n, dtype=bool)
    val[max(1, n // 2):] = True
    return Graph(sp.csr_matrix(a), rng.normal(size=(n, n_features)), labels, train, val,
                 np.zeros(n, dtype=bool), n_classes=n_classes)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_sbm():
    return generate_sbm(60, 3, 0.3, 0.02, 6, 0.5, seed=7)


HOMOPHILIC_SWEEP = """
method = "gk"
seeds = [0, 1, 2, 3, 4]
output = "{out}"
plots = false

[data.synthetic]
n = 3000
classes = 6
p_in = 0.006
p_out = 0.0004
feature_dim = 50
feature_noise = 3.0

[train]
ratio = 0.1
max_epochs = 200
"""


@pytest.fixture(scope="session")
def homophilic_t_sweep(tmp_path_factory):
    """``sweep-t`` over T in {10, 50, inf} on a 3000-node homophilic SBM, 5 seeds.

    Returns the parsed summary rows; the run takes about 40 s.
    """
    from gkcoarsen.cli import main

    root = tmp_path_factory.mktemp("t_sweep")
    config = root / "sweep.toml"
    config.write_text(HOMOPHILIC_SWEEP.format(out=root / "out"))
    assert main(["sweep-t", "--config", str(config), "--T-values", "10,50,inf"]) == 0
    with open(root / "out" / "sweep_t_summary.csv") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def toy2_dir():
    return FIXTURES / "toy2"


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
