"""Pytest configuration and fixtures for markov-poisson."""

from __future__ import annotations

import os
import tempfile
from collections.abc import Callable, Iterator
from pathlib import Path

import numpy as np
import pytest

from markov_poisson.chain import ChainKind
from markov_poisson.truncation import FiniteKernel

# Bound worker threads under test
os.environ["MARKOV_POISSON_THREADS"] = "2"


@pytest.fixture
def temp_dir() -> Iterator[Path]:
    """Create a temporary directory for tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def two_state() -> FiniteKernel:
    """Symmetric two-state stochastic matrix."""
    return FiniteKernel.from_matrix([[0.5, 0.5], [0.5, 0.5]])


@pytest.fixture
def two_state_generator() -> FiniteKernel:
    """Two-state generator with rates 1 (0 -> 1) and 2 (1 -> 0)."""
    return FiniteKernel.from_matrix([[-1.0, 1.0], [2.0, -2.0]], ChainKind.CONTINUOUS)


@pytest.fixture
def random_kernel() -> Callable[..., FiniteKernel]:
    """Factory of irreducible random kernels seeded with ``default_rng``."""

    def make(
        size: int, kind: ChainKind = ChainKind.DISCRETE, seed: int = 0
    ) -> FiniteKernel:
        rng = np.random.default_rng(seed)
        weights = rng.random((size, size)) + 0.05
        if kind is ChainKind.DISCRETE:
            entries = weights / weights.sum(axis=1, keepdims=True)
        else:
            np.fill_diagonal(weights, 0.0)
            entries = weights - np.diag(weights.sum(axis=1))
        return FiniteKernel(kind=kind, n=size - 1, entries=entries)

    return make

