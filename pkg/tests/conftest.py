from __future__ import annotations

import numpy as np
import pytest


def central_diff(fn, x, h=1e-5):
    """Central finite differences of a scalar function at a flat vector."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        up = x.copy()
        dn = x.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (fn(up) - fn(dn)) / (2.0 * h)
    return grad


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
