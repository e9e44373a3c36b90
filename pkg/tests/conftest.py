import numpy as np
import pytest

import bmcut


@pytest.fixture
def edge2():
    """Two nodes, one unit edge."""
    return bmcut.preprocess([[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture
def triangle():
    """Complete graph on 3 nodes with all weights -1."""
    return bmcut.preprocess(-(np.ones((3, 3)) - np.eye(3)))


@pytest.fixture
def triangle_saddle():
    """All rows equal: a stationary point of the triangle instance, f = -6."""
    return bmcut.FactorPoint(np.tile([1.0, 0.0], (3, 1)))


@pytest.fixture
def triangle_optimum():
    """Rows at mutual 120 degrees: the r=2 maximizer, f = 3."""
    ang = np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
    return bmcut.FactorPoint(np.column_stack([np.cos(ang), np.sin(ang)]))


def small_corpus(sizes=(10, 50, 200), seeds=(0, 1)):
    """Mixed Gaussian and signed Erdos-Renyi instances."""
    out = []
    for n in sizes:
        for s in seeds:
            out.append(bmcut.gen_gaussian(n, seed=100 * n + s))
            edges = min(3 * n, n * (n - 1) // 2)
            sign = -1 if s % 2 == 0 else 1
            out.append(bmcut.gen_erdos_renyi(n, edges, sign, seed=200 * n + s))
    return out
