"""Logistic loss and its first/second-order statistics.

The model output is always a raw margin (log-odds); probabilities appear
only at prediction and classification boundaries.  Every quantity that is
ever aggregated across workers derives from the (grad, hess) pair computed
here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Vectorised gradients are snapped to this dyadic grid before any
# accumulation.  Sums of grid-aligned values stay exactly representable in
# float64 up to ~2^53 / GRAD_GRID instances, so bin sums do not depend on
# summation order and federated aggregation is bit-reproducible for any
# worker count.
GRAD_GRID = 2.0 ** 32


@dataclass(frozen=True)
class GradPair:
    """First and second derivative of the loss w.r.t. the raw margin."""

    grad: float
    hess: float


def _check_label(y) -> None:
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y!r}")


def _check_finite(margin) -> None:
    if not np.isfinite(margin):
        raise ValueError(f"margin must be finite, got {margin!r}")


def sigmoid(margin: float) -> float:
    """Numerically stable logistic function 1 / (1 + exp(-margin))."""
    _check_finite(margin)
    if margin >= 0:
        return 1.0 / (1.0 + np.exp(-margin))
    e = np.exp(margin)
    return e / (1.0 + e)


def grad_pair(y: int, margin: float) -> GradPair:
    """grad = sigmoid(margin) - y, hess = sigmoid * (1 - sigmoid)."""
    _check_label(y)
    _check_finite(margin)
    p = sigmoid(margin)
    return GradPair(grad=p - y, hess=p * (1.0 - p))


def loss_value(y: int, margin: float) -> float:
    """Per-instance logistic loss, log1p-stable for large |margin|."""
    _check_label(y)
    _check_finite(margin)
    # y*log(1+e^-m) + (1-y)*log(1+e^m) == log(1+e^-|m|) + max(0, m*(1-2y))
    z = margin if y == 0 else -margin
    return np.log1p(np.exp(-abs(z))) + max(z, 0.0)


def sigmoid_vec(margins: np.ndarray) -> np.ndarray:
    out = np.empty_like(margins, dtype=np.float64)
    pos = margins >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-margins[pos]))
    e = np.exp(margins[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def snap_to_grid(a: np.ndarray) -> np.ndarray:
    """Round to the fixed-point grid that makes accumulation exact."""
    return np.rint(a * GRAD_GRID) / GRAD_GRID


def grad_stats(labels: np.ndarray, margins: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised (grad, hess) arrays, snapped to the accumulation grid."""
    p = sigmoid_vec(np.asarray(margins, dtype=np.float64))
    g = p - np.asarray(labels, dtype=np.float64)
    h = p * (1.0 - p)
    return snap_to_grid(g), snap_to_grid(h)


def loss_vec(labels: np.ndarray, margins: np.ndarray) -> np.ndarray:
    """Vectorised per-instance logistic loss."""
    labels = np.asarray(labels, dtype=np.float64)
    margins = np.asarray(margins, dtype=np.float64)
    z = np.where(labels == 0, margins, -margins)
    return np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)
