"""Dataset ingestion, deterministic partitioning, and horizontal sharding.

The reference dataset is the public credit-card fraud CSV
(Time,V1..V28,Amount,Class): 284807 rows, 30 features, 492 positives.
Feature values are kept as float64; rows with missing or non-numeric
cells are rejected outright.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd


class DataError(ValueError):
    """Malformed or infeasible input data."""


@dataclass
class Dataset:
    features: np.ndarray       # float64, n x d
    labels: np.ndarray         # int8, values in {0, 1}
    feature_names: list[str]

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, rows: np.ndarray) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.labels[rows], self.feature_names)


@dataclass
class SplitIndices:
    train: np.ndarray
    update: np.ndarray
    test: np.ndarray
    seed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "train": self.train.tolist(),
                "update": self.update.tolist(),
                "test": self.test.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitIndices":
        doc = json.loads(text)
        return cls(
            train=np.asarray(doc["train"], dtype=np.int64),
            update=np.asarray(doc["update"], dtype=np.int64),
            test=np.asarray(doc["test"], dtype=np.int64),
            seed=int(doc["seed"]),
        )


@dataclass
class Shard:
    worker_id: int
    rows: np.ndarray  # indices into a parent Dataset


def load_csv(path: str | Path, label_column: str = "Class") -> Dataset:
    """Load a dense numeric CSV with a binary label column."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path}: empty dataset") from exc
    if frame.shape[0] == 0:
        raise DataError(f"{path}: empty dataset (header only)")
    if label_column not in frame.columns:
        raise DataError(f"{path}: missing label column {label_column!r}")

    feature_names = [c for c in frame.columns if c != label_column]
    if not feature_names:
        raise DataError(f"{path}: no feature columns besides {label_column!r}")

    for col in frame.columns:
        numeric = pd.to_numeric(frame[col], errors="coerce")
        bad = numeric.isna() & frame[col].notna()
        if bad.any():
            row = int(bad.idxmax())
            raise DataError(
                f"{path}: non-numeric cell at row {row}, column {col!r}: "
                f"{frame[col].iloc[row]!r}"
            )
        missing = numeric.isna()
        if missing.any():
            row = int(missing.idxmax())
            raise DataError(f"{path}: missing value at row {row}, column {col!r}")
        frame[col] = numeric

    labels = frame[label_column].to_numpy()
    bad_label = ~np.isin(labels, (0, 1))
    if bad_label.any():
        row = int(np.argmax(bad_label))
        raise DataError(
            f"{path}: label outside {{0,1}} at row {row}: {labels[row]!r}"
        )

    return Dataset(
        features=frame[feature_names].to_numpy(dtype=np.float64),
        labels=labels.astype(np.int8),
        feature_names=feature_names,
    )


def write_csv(ds: Dataset, path: str | Path, label_column: str = "Class") -> None:
    """Inverse of load_csv; float repr keeps the round trip bit-exact."""
    frame = pd.DataFrame(ds.features, columns=ds.feature_names)
    frame[label_column] = ds.labels
    frame.to_csv(path, index=False, float_format=lambda x: repr(float(x)))


def partition(
    ds: Dataset, train_n: int, update_n: int, test_n: int, seed: int
) -> SplitIndices:
    """Deterministic shuffle under seed, then contiguous assignment."""
    n = ds.n_rows
    if train_n + update_n + test_n != n:
        raise DataError(
            f"partition sizes {train_n}+{update_n}+{test_n} != {n} rows"
        )
    order = np.random.default_rng(seed).permutation(n)
    return SplitIndices(
        train=np.sort(order[:train_n]),
        update=np.sort(order[train_n : train_n + update_n]),
        test=np.sort(order[train_n + update_n :]),
        seed=seed,
    )


def shard(rows: np.ndarray, n_workers: int, seed: int) -> list[Shard]:
    """Split a row-index list into n_workers near-equal disjoint shards."""
    rows = np.asarray(rows, dtype=np.int64)
    if n_workers < 1:
        raise DataError(f"worker count must be >= 1, got {n_workers}")
    if n_workers > rows.size:
        raise DataError(f"{n_workers} workers but only {rows.size} rows")
    order = np.random.default_rng(seed).permutation(rows.size)
    shuffled = rows[order]
    sizes = np.full(n_workers, rows.size // n_workers, dtype=np.int64)
    sizes[: rows.size % n_workers] += 1
    out = []
    start = 0
    for w, size in enumerate(sizes):
        out.append(Shard(worker_id=w, rows=np.sort(shuffled[start : start + size])))
        start += size
    return out
