import os
from pathlib import Path

import numpy as np
import pytest

from fedboost.data import Dataset, SplitIndices, partition


def make_imbalanced(
    n: int, d: int = 5, pos_rate: float = 0.05, seed: int = 0, shift: float = 2.5
) -> Dataset:
    """Gaussian features; positives are a shifted cluster, so the classes
    are separable enough for boosting to find them."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (rng.random(n) < pos_rate).astype(np.int8)
    X[y == 1, : max(1, d // 2)] += shift
    return Dataset(X, y, [f"V{i}" for i in range(d)])


def three_way_split(ds: Dataset, seed: int = 1) -> SplitIndices:
    n = ds.n_rows
    train_n = int(n * 0.6)
    update_n = int(n * 0.2)
    return partition(ds, train_n, update_n, n - train_n - update_n, seed)


def creditcard_path() -> Path | None:
    """The public credit-card fraud CSV, if the user has provided it."""
    env = os.environ.get("FEDBOOST_CREDITCARD_CSV")
    candidates = [Path(env)] if env else []
    candidates.append(Path(__file__).resolve().parent.parent / "data" / "creditcard.csv")
    for p in candidates:
        if p.exists():
            return p
    return None


@pytest.fixture
def small_dataset() -> Dataset:
    return make_imbalanced(600, d=4, pos_rate=0.15, seed=3)


@pytest.fixture
def toy_csv(tmp_path) -> Path:
    path = tmp_path / "toy.csv"
    path.write_text(
        "Time,V1,Amount,Class\n"
        "0.0,1.5,10.0,0\n"
        "1.0,-0.5,20.0,1\n"
        "2.0,0.25,30.0,0\n"
    )
    return path
