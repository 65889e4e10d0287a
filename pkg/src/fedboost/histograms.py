"""Per-node, per-feature, per-bin accumulation of gradient statistics.

A NodeHistogramSet is the only payload a worker ever sends about training
data: bin-level sums of (grad, hess) plus instance counts.  Merging across
workers (or across the base and wrongly-classified instance sets) is
element-wise addition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binning import BinLayoutSet, bin_matrix


@dataclass
class FeatureHistogram:
    feature_index: int
    grad: np.ndarray   # float64, length n_bins
    hess: np.ndarray   # float64, length n_bins
    count: np.ndarray  # int64, length n_bins

    @property
    def n_bins(self) -> int:
        return len(self.count)


@dataclass
class NodeHistogramSet:
    node_id: int
    histograms: list[FeatureHistogram]
    total_grad: float
    total_hess: float
    total_count: int

    @property
    def n_features(self) -> int:
        return len(self.histograms)

    def min_nonzero_count(self) -> int:
        """Smallest nonzero bin count across features (0 if empty)."""
        best = 0
        for h in self.histograms:
            nz = h.count[h.count > 0]
            if nz.size:
                m = int(nz.min())
                best = m if best == 0 else min(best, m)
        return best


def empty_histograms(node_id: int, bin_counts: list[int]) -> NodeHistogramSet:
    hists = [
        FeatureHistogram(
            feature_index=f,
            grad=np.zeros(nb, dtype=np.float64),
            hess=np.zeros(nb, dtype=np.float64),
            count=np.zeros(nb, dtype=np.int64),
        )
        for f, nb in enumerate(bin_counts)
    ]
    return NodeHistogramSet(node_id, hists, 0.0, 0.0, 0)


def accumulate_binned(
    bins: np.ndarray,
    rows: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    bin_counts: list[int],
    node_id: int = 0,
) -> NodeHistogramSet:
    """Accumulate from a precomputed n x d bin-index matrix.

    ``rows`` indexes into ``bins`` / ``grad`` / ``hess``; grad and hess are
    full-length arrays aligned with the bin matrix.
    """
    rows = np.asarray(rows, dtype=np.int64)
    g = grad[rows]
    h = hess[rows]
    hists = []
    for f, nb in enumerate(bin_counts):
        idx = bins[rows, f]
        hists.append(
            FeatureHistogram(
                feature_index=f,
                grad=np.bincount(idx, weights=g, minlength=nb),
                hess=np.bincount(idx, weights=h, minlength=nb),
                count=np.bincount(idx, minlength=nb).astype(np.int64),
            )
        )
    return NodeHistogramSet(
        node_id=node_id,
        histograms=hists,
        total_grad=float(g.sum()),
        total_hess=float(h.sum()),
        total_count=int(rows.size),
    )


def accumulate(
    features: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    layouts: BinLayoutSet,
    node_id: int = 0,
) -> NodeHistogramSet:
    """Accumulate raw feature rows through a layout set."""
    features = np.asarray(features, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    hess = np.asarray(hess, dtype=np.float64)
    if not (features.shape[0] == grad.size == hess.size):
        raise ValueError(
            f"row/grad length mismatch: {features.shape[0]} rows, "
            f"{grad.size} grads, {hess.size} hessians"
        )
    if features.shape[0] == 0:
        return empty_histograms(node_id, layouts.bin_counts())
    bins = bin_matrix(features, layouts)
    rows = np.arange(features.shape[0])
    return accumulate_binned(bins, rows, grad, hess, layouts.bin_counts(), node_id)


def _check_shapes(a: NodeHistogramSet, b: NodeHistogramSet) -> None:
    if a.node_id != b.node_id:
        raise ValueError(f"node_id mismatch: {a.node_id} vs {b.node_id}")
    if a.n_features != b.n_features:
        raise ValueError(f"feature count mismatch: {a.n_features} vs {b.n_features}")
    for ha, hb in zip(a.histograms, b.histograms):
        if ha.n_bins != hb.n_bins:
            raise ValueError(
                f"bin count mismatch on feature {ha.feature_index}: "
                f"{ha.n_bins} vs {hb.n_bins}"
            )


def merge(a: NodeHistogramSet, b: NodeHistogramSet) -> NodeHistogramSet:
    """Element-wise sum of two histogram sets for the same node."""
    _check_shapes(a, b)
    hists = [
        FeatureHistogram(
            feature_index=ha.feature_index,
            grad=ha.grad + hb.grad,
            hess=ha.hess + hb.hess,
            count=ha.count + hb.count,
        )
        for ha, hb in zip(a.histograms, b.histograms)
    ]
    return NodeHistogramSet(
        node_id=a.node_id,
        histograms=hists,
        total_grad=a.total_grad + b.total_grad,
        total_hess=a.total_hess + b.total_hess,
        total_count=a.total_count + b.total_count,
    )


def merge_all(sets: list[NodeHistogramSet]) -> NodeHistogramSet:
    if not sets:
        raise ValueError("nothing to merge")
    out = sets[0]
    for s in sets[1:]:
        out = merge(out, s)
    return out


def subtract(parent: NodeHistogramSet, child: NodeHistogramSet, node_id: int) -> NodeHistogramSet:
    """parent - child, used to derive a sibling histogram without a second
    accumulation pass.  Exact because all sums live on the gradient grid."""
    if parent.n_features != child.n_features:
        raise ValueError(
            f"feature count mismatch: {parent.n_features} vs {child.n_features}"
        )
    hists = [
        FeatureHistogram(
            feature_index=hp.feature_index,
            grad=hp.grad - hc.grad,
            hess=hp.hess - hc.hess,
            count=hp.count - hc.count,
        )
        for hp, hc in zip(parent.histograms, child.histograms)
    ]
    return NodeHistogramSet(
        node_id=node_id,
        histograms=hists,
        total_grad=parent.total_grad - child.total_grad,
        total_hess=parent.total_hess - child.total_hess,
        total_count=parent.total_count - child.total_count,
    )
