import numpy as np
import pytest

from lanehouse.ingest import DesignMatrix
from lanehouse.synthetic import write_csv


def make_dm(x, y, names=None) -> DesignMatrix:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    names = names or [f"x{j}" for j in range(x.shape[1])]
    return DesignMatrix(x, np.asarray(y, dtype=np.float64), tuple(names))


def random_regression(rng, n, p, noise=0.1, cond_limit=1e4):
    """Well-conditioned random instance ``y = 2 + x @ beta + noise``."""
    while True:
        x = rng.normal(size=(n, p))
        if np.linalg.cond(np.column_stack([np.ones(n), x])) < cond_limit:
            break
    beta = rng.normal(size=p) * 3
    y = 2.0 + x @ beta + noise * rng.normal(size=n)
    return make_dm(x, y)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240607))


@pytest.fixture(scope="session")
def synthetic_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "listings.csv"
    return write_csv(path, 300, seed=3, n_missing=2, n_duplicates=5)
