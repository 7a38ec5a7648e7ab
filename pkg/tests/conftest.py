"""Shared helpers for the test suite."""

import numpy as np
import pytest

from wppsr.images import PatchDistribution


def random_distribution(rng, count, patch_shape=(1, 1), scale=1.0):
    """Uniform random patch distribution with the given atom count."""
    s1, s2 = patch_shape
    return PatchDistribution(scale * rng.random((count, s1 * s2)), patch_shape)


def random_instance(rng, max_count=8):
    """Balanced random transport instance with 1x1 - 3x3 patches."""
    n = int(rng.integers(2, max_count + 1))
    side = int(rng.choice([1, 2, 3]))
    src = random_distribution(rng, n, (side, side))
    ref = random_distribution(rng, n, (side, side))
    return src, ref


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
