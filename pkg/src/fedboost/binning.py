"""Per-feature quantile binning with a k-anonymity floor.

Each feature is discretised into at most ``v`` equal-frequency bins whose
populations (on the building data) never drop below the anonymity floor
``k``.  A bin is the "virtual sample" unit: everything transmitted during
training is an aggregate over one bin, so no group smaller than k is ever
isolated by the wire traffic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class InfeasibleLayout(ValueError):
    """Raised when (v, k) cannot be satisfied by the building data."""


@dataclass
class BinLayout:
    """Bin boundaries for one feature.

    cuts are strictly increasing midpoints between distinct adjacent
    values; a value equal to a cut belongs to the bin on its left.
    Layouts built from heavily tied data may collapse to fewer than the
    requested number of bins.
    """

    feature_index: int
    cuts: np.ndarray          # float64, length n_bins - 1
    populations: np.ndarray   # int64, length n_bins, from the building data

    @property
    def n_bins(self) -> int:
        return len(self.populations)


@dataclass
class BinLayoutSet:
    layouts: list[BinLayout]
    v: int
    k: int

    @property
    def n_features(self) -> int:
        return len(self.layouts)

    def bin_counts(self) -> list[int]:
        return [lay.n_bins for lay in self.layouts]

    def to_json(self) -> str:
        doc = {
            "v": self.v,
            "k": self.k,
            "layouts": [
                {
                    "feature": lay.feature_index,
                    "cuts": [float(c) for c in lay.cuts],
                    "populations": [int(p) for p in lay.populations],
                }
                for lay in self.layouts
            ],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "BinLayoutSet":
        doc = json.loads(text)
        layouts = [
            BinLayout(
                feature_index=entry["feature"],
                cuts=np.asarray(entry["cuts"], dtype=np.float64),
                populations=np.asarray(entry["populations"], dtype=np.int64),
            )
            for entry in doc["layouts"]
        ]
        return cls(layouts=layouts, v=doc["v"], k=doc["k"])


def build_layout(values: np.ndarray, v: int, k: int, feature_index: int = 0) -> BinLayout:
    """Equal-frequency bins over ``values`` with every population >= k.

    Cut placement walks distinct values and closes a bin at the first
    point where the running count reaches both the next quantile target
    and the floor k.  Ties never straddle a cut.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot build a bin layout from no values")
    if v < 1 or k < 1:
        raise ValueError(f"v and k must be >= 1, got v={v} k={k}")
    n = values.size
    if v * k > n:
        raise InfeasibleLayout(
            f"feature {feature_index}: v*k = {v}*{k} exceeds {n} building values"
        )

    uniq, counts = np.unique(values, return_counts=True)
    cum = np.cumsum(counts)
    m = uniq.size

    bounds: list[int] = []  # index of last distinct value in each closed bin
    start_cum = 0
    target_idx = 1
    while len(bounds) < v - 1 and target_idx <= v - 1:
        t = n * target_idx / v
        if t <= start_cum:
            target_idx += 1
            continue
        threshold = max(start_cum + k, t)
        j = int(np.searchsorted(cum, threshold, side="left"))
        if j >= m - 1 or n - cum[j] < k:
            break
        bounds.append(j)
        start_cum = int(cum[j])
        target_idx += 1

    cuts = np.array([(uniq[j] + uniq[j + 1]) / 2.0 for j in bounds], dtype=np.float64)
    edges = [0] + [int(cum[j]) for j in bounds] + [n]
    populations = np.diff(edges).astype(np.int64)
    return BinLayout(feature_index=feature_index, cuts=cuts, populations=populations)


def build_layout_set(features: np.ndarray, v: int, k: int) -> BinLayoutSet:
    """Build one layout per column of a dense feature matrix."""
    features = np.asarray(features, dtype=np.float64)
    layouts = [
        build_layout(features[:, f], v, k, feature_index=f)
        for f in range(features.shape[1])
    ]
    return BinLayoutSet(layouts=layouts, v=v, k=k)


def build_layout_from_counts(
    uniq: np.ndarray, counts: np.ndarray, v: int, k: int, feature_index: int = 0
) -> BinLayout:
    """Same as build_layout but from a (sorted distinct value, count) summary."""
    values = np.repeat(np.asarray(uniq, dtype=np.float64), np.asarray(counts, dtype=np.int64))
    return build_layout(values, v, k, feature_index=feature_index)


def assign_bin(value: float, layout: BinLayout) -> int:
    """Bin index of a single value; boundary values go to the left bin."""
    if not np.isfinite(value):
        raise ValueError(f"cannot bin non-finite value {value!r}")
    return int(np.searchsorted(layout.cuts, value, side="left"))


def assign_bins(values: np.ndarray, layout: BinLayout) -> np.ndarray:
    """Vectorised assign_bin."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("cannot bin non-finite values")
    return np.searchsorted(layout.cuts, values, side="left").astype(np.int32)


def bin_matrix(features: np.ndarray, layout_set: BinLayoutSet) -> np.ndarray:
    """n x d int32 matrix of bin indices for a dense feature matrix."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[1] != layout_set.n_features:
        raise ValueError(
            f"feature count mismatch: data has {features.shape[1]}, "
            f"layouts cover {layout_set.n_features}"
        )
    cols = [assign_bins(features[:, f], lay) for f, lay in enumerate(layout_set.layouts)]
    return np.column_stack(cols)


@dataclass
class AnonymityReport:
    min_population: dict[int, int] = field(default_factory=dict)  # feature -> min nonzero bin pop
    k: int = 0

    @property
    def passed(self) -> bool:
        return all(p >= self.k for p in self.min_population.values())


def audit_anonymity(layout_set: BinLayoutSet, features: np.ndarray) -> AnonymityReport:
    """Smallest nonzero bin population per feature when ``features`` is
    pushed through the layouts; passes when every minimum is >= k."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[1] != layout_set.n_features:
        raise ValueError(
            f"feature count mismatch: data has {features.shape[1]}, "
            f"layouts cover {layout_set.n_features}"
        )
    report = AnonymityReport(k=layout_set.k)
    for f, lay in enumerate(layout_set.layouts):
        idx = assign_bins(features[:, f], lay)
        pops = np.bincount(idx, minlength=lay.n_bins)
        nonzero = pops[pops > 0]
        report.min_population[f] = int(nonzero.min()) if nonzero.size else 0
    return report
