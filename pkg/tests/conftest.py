import os

import numpy as np
import pytest

from halkit.basis import build_basis, HalModel


def pytest_collection_modifyitems(config, items):
    if os.environ.get("HALKIT_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="long-running; set HALKIT_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_model(rng, n, d, intercept=True, scale=1.0):
    """Random deduplicated model on ``n`` uniform points in ``[0, 1]^d``."""
    x = rng.uniform(size=(n, d))
    basis = build_basis(x, intercept)
    beta = rng.normal(size=basis.column_count) * scale
    return HalModel(basis, beta, float(np.abs(beta).sum()))


def central_difference(fn, beta, h=1e-5):
    """Central finite-difference gradient of a scalar ``fn``."""
    g = np.zeros_like(beta)
    for k in range(beta.size):
        e = np.zeros_like(beta)
        e[k] = h
        g[k] = (fn(beta + e) - fn(beta - e)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.abs(a - b).max() / max(1.0, np.abs(b).max()))
