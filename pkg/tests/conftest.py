"""Shared test fixtures and independent oracle implementations.

Oracles here are deliberately naive (exhaustive enumeration, double loops)
and never call the code paths they check.
"""
from itertools import combinations

import numpy as np
import pytest

from pathflow import SamplePath


def brute_force_p_variation(seq, p):
    """Exhaustive max over all index subsets of size >= 2, to the 1/p."""
    seq = list(seq)
    n = len(seq)
    best = 0.0
    for size in range(2, n + 1):
        for idx in combinations(range(n), size):
            total = sum(abs(seq[idx[k + 1]] - seq[idx[k]]) ** p
                        for k in range(len(idx) - 1))
            best = max(best, total)
    return best ** (1.0 / p)


def direct_young_2d(hv, Gv):
    """Double-loop left-point 2D Young sum."""
    m, n = Gv.shape
    total = 0.0
    for i in range(1, m):
        for j in range(1, n):
            rect = Gv[i, j] - Gv[i - 1, j] - Gv[i, j - 1] + Gv[i - 1, j - 1]
            total += hv[i - 1, j - 1] * rect
    return total


def path_from_values(values, T=1.0, kind="brownian", seed=0):
    values = np.asarray(values, dtype=np.float64)
    return SamplePath(z=float(values[0]), T=T, n_steps=values.size - 1,
                      values=values, kind=kind, seed=seed)


@pytest.fixture(scope="session")
def bm_path():
    from pathflow import simulate_brownian
    return simulate_brownian(2 ** 12, 1.0, 0.0, seed=1234)


@pytest.fixture(scope="session")
def bm_path_fine():
    from pathflow import simulate_brownian
    return simulate_brownian(2 ** 15, 1.0, 0.0, seed=99)
