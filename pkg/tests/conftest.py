from __future__ import annotations

import numpy as np
import pytest

from markov_cocycle.core import MarkovCocycle
from markov_cocycle.driving import FiniteCycle

P0 = np.array([[0.5, 0.3], [0.5, 0.7]])
P1 = np.array([[0.9, 0.2], [0.1, 0.8]])
H0 = np.array([41.0, 45.0]) / 86
H1 = np.array([34.0, 52.0]) / 86


def random_markov(rng: np.random.Generator, d: int, sparsity: float = 0.0) -> np.ndarray:
    m = rng.random((d, d))
    if sparsity:
        m[rng.random((d, d)) < sparsity] = 0.0
        m[rng.integers(d, size=d), np.arange(d)] += 0.1   # no empty column
    return m / m.sum(axis=0, keepdims=True)


def random_cocycle(rng: np.random.Generator, d: int, n: int) -> MarkovCocycle:
    return MarkovCocycle([random_markov(rng, d) for _ in range(n)], FiniteCycle(n))


def power_iteration(m: np.ndarray, steps: int = 20000) -> np.ndarray:
    """Stationary vector by plain repeated multiplication."""
    v = np.full(m.shape[0], 1.0 / m.shape[0])
    for _ in range(steps):
        v = m @ v
    return v / v.sum()


@pytest.fixture
def period2() -> MarkovCocycle:
    return MarkovCocycle([P0, P1], FiniteCycle(2))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20261018)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
