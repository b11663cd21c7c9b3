"""Shared pytest fixtures for the pruning scripts."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scripts.pruning.core_model import TokenSet


def random_token_set(seed, grid_h=4, grid_w=4, dim=8, normalized=True):
    """Gaussian embeddings with positive attention on a grid_h x grid_w grid."""
    rng = np.random.default_rng(seed)
    embeddings = rng.standard_normal((grid_h * grid_w, dim))
    if normalized:
        embeddings /= np.linalg.norm(embeddings, axis=1, keepdims=True)
    attention = rng.random(grid_h * grid_w) + 0.01
    return TokenSet.from_arrays(embeddings, attention, grid_h, grid_w, normalized=normalized)


@pytest.fixture
def make_token_set():
    return random_token_set


@pytest.fixture
def token_set_24x24():
    """A LLaVA-sized 576-token instance."""
    return random_token_set(0, grid_h=24, grid_w=24, dim=16)
