import os
import sys
from itertools import product
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402


def gate_joint(table):
    """Uniform binary inputs, ``y = table[2f + c]`` in {0, 1}; y index 0 is +1."""
    p = np.zeros((2, 2, 2))
    for f, c in product(range(2), range(2)):
        y = table[2 * f + c]
        p[0 if y == 1 else 1, f, c] = 0.25
    return p


ALL_GATES = [tuple((k >> i) & 1 for i in range(4)) for k in range(16)]


def random_joint(rng, n_sources=3, max_alphabet=4, zero_fraction=0.3):
    """Random pmf with random alphabets and a random share of empty cells."""
    shape = (2,) + tuple(int(a) for a in rng.integers(1, max_alphabet + 1, n_sources))
    p = rng.dirichlet(np.ones(int(np.prod(shape)))).reshape(shape)
    p[rng.random(shape) < zero_fraction] = 0.0
    if p.sum() == 0:
        p.flat[0] = 1.0
    return p / p.sum()


def oracle_vector(p, lattice):
    """Oracle atoms in the package's canonical order, plus H_res."""
    names = "FCL"[: p.ndim - 1]
    atoms = {oracles.label(a, names): v for a, v in oracles.atoms(p).items()}
    return np.array([atoms[label] for label in lattice.labels] + [oracles.conditional_entropy(p)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_mnist():
    """A 5000-digit MNIST sample from mlxtend, or the real data if configured."""
    from infomorph.dataset import DatasetSplit, load_mnist

    if os.environ.get("INFOMORPH_MNIST_DIR"):
        return load_mnist(split="train").subset(slice(0, 5000))
    data = pytest.importorskip("mlxtend.data")
    x, y = data.mnist_data()
    return DatasetSplit(x / 255.0, y.astype(np.int64))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
