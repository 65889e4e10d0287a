"""Server-side split enumeration over aggregated histograms.

Gain for a candidate cut:

    0.5 * (GL^2/(HL+lam) + GR^2/(HR+lam) - (GL+GR)^2/(HL+HR+lam)) - gamma

A split is accepted only when its gain is strictly positive and both
children hold at least ``min_child_count`` instances.  Ties break toward
the lowest feature index, then the lowest cut bin, so the chosen split is
deterministic for identical histograms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .histograms import NodeHistogramSet


@dataclass(frozen=True)
class Regularization:
    lam: float = 1.0    # L2 penalty on leaf weights
    gamma: float = 0.0  # per-leaf complexity penalty

    def __post_init__(self):
        if self.lam < 0 or self.gamma < 0:
            raise ValueError(f"regularization must be non-negative, got {self}")


@dataclass(frozen=True)
class SideStats:
    grad: float
    hess: float
    count: int


@dataclass(frozen=True)
class SplitDecision:
    feature_index: int
    cut_bin: int  # split after this bin: bins <= cut_bin go left
    gain: float
    left: SideStats
    right: SideStats


def split_gain(gl: float, hl: float, gr: float, hr: float, reg: Regularization) -> float:
    """Regularized loss reduction of a single candidate cut."""
    parent = (gl + gr) ** 2 / (hl + hr + reg.lam)
    return 0.5 * (gl**2 / (hl + reg.lam) + gr**2 / (hr + reg.lam) - parent) - reg.gamma


def leaf_weight(grad: float, hess: float, reg: Regularization) -> float:
    """Optimal leaf output -G / (H + lambda)."""
    denom = hess + reg.lam
    if denom == 0:
        raise ZeroDivisionError("hess + lambda is zero; cannot compute leaf weight")
    return -grad / denom


def best_split(
    hist: NodeHistogramSet,
    reg: Regularization,
    min_child_count: int = 1,
) -> SplitDecision | None:
    """Scan every feature and every bin prefix; return the maximal
    positive-gain cut, or None when no admissible cut improves the loss."""
    total_g = hist.total_grad
    total_h = hist.total_hess
    total_c = hist.total_count

    best: SplitDecision | None = None
    for fh in hist.histograms:
        if fh.n_bins < 2:
            continue
        gl = np.cumsum(fh.grad)[:-1]
        hl = np.cumsum(fh.hess)[:-1]
        cl = np.cumsum(fh.count)[:-1]
        gr = total_g - gl
        hr = total_h - hl
        cr = total_c - cl

        # empty-side cuts with lam=0 hit 0/0; they are masked below
        with np.errstate(divide="ignore", invalid="ignore"):
            parent_term = total_g**2 / (total_h + reg.lam)
            gains = 0.5 * (
                gl**2 / (hl + reg.lam) + gr**2 / (hr + reg.lam) - parent_term
            ) - reg.gamma
        admissible = (cl >= min_child_count) & (cr >= min_child_count)
        gains = np.where(admissible & np.isfinite(gains), gains, -np.inf)
        b = int(np.argmax(gains))
        if gains[b] > 0 and (best is None or gains[b] > best.gain):
            best = SplitDecision(
                feature_index=fh.feature_index,
                cut_bin=b,
                gain=float(gains[b]),
                left=SideStats(float(gl[b]), float(hl[b]), int(cl[b])),
                right=SideStats(float(gr[b]), float(hr[b]), int(cr[b])),
            )
    return best
