import numpy as np
import pytest

from fedboost.histograms import FeatureHistogram, NodeHistogramSet
from fedboost.splits import Regularization, best_split, leaf_weight, split_gain


def _hist(per_feature, node_id=0):
    """per_feature: list of (g_bins, h_bins, c_bins) triples."""
    hists = []
    for f, (g, h, c) in enumerate(per_feature):
        hists.append(
            FeatureHistogram(
                f,
                np.asarray(g, dtype=float),
                np.asarray(h, dtype=float),
                np.asarray(c, dtype=np.int64),
            )
        )
    g0 = hists[0]
    return NodeHistogramSet(
        node_id, hists, float(g0.grad.sum()), float(g0.hess.sum()), int(g0.count.sum())
    )


def _brute_force(hist, reg, min_child_count=1):
    best = None
    for fh in hist.histograms:
        for b in range(fh.n_bins - 1):
            gl = float(fh.grad[: b + 1].sum())
            hl = float(fh.hess[: b + 1].sum())
            cl = int(fh.count[: b + 1].sum())
            gr = hist.total_grad - gl
            hr = hist.total_hess - hl
            cr = hist.total_count - cl
            if cl < min_child_count or cr < min_child_count:
                continue
            gain = (
                0.5
                * (
                    gl**2 / (hl + reg.lam)
                    + gr**2 / (hr + reg.lam)
                    - hist.total_grad**2 / (hist.total_hess + reg.lam)
                )
                - reg.gamma
            )
            if gain > 0 and (best is None or gain > best[0]):
                best = (gain, fh.feature_index, b)
    return best


def test_worked_example_gain():
    hist = _hist([([-0.5, 0.5], [0.25, 0.25], [1, 1])])
    decision = best_split(hist, Regularization(lam=1.0, gamma=0.0))
    assert decision is not None
    assert decision.feature_index == 0 and decision.cut_bin == 0
    assert decision.gain == pytest.approx(0.2, abs=1e-12)
    assert decision.left.count == 1 and decision.right.count == 1


def test_zero_totals_give_no_split():
    hist = _hist([([0.0, 0.0], [0.0, 0.0], [0, 0])])
    assert best_split(hist, Regularization(lam=1.0, gamma=0.0), min_child_count=0) is None


def test_random_histograms_match_brute_force():
    rng = np.random.default_rng(0)
    reg = Regularization(lam=1.0, gamma=0.1)
    for trial in range(50):
        per_feature = []
        counts = rng.integers(1, 6, size=8)
        for _ in range(3):
            g = rng.uniform(-1, 1, size=8) * counts
            h = rng.uniform(0.05, 0.25, size=8) * counts
            per_feature.append((g, h, counts))
        hist = _hist(per_feature)
        expected = _brute_force(hist, reg)
        got = best_split(hist, reg)
        if expected is None:
            assert got is None
        else:
            assert (got.feature_index, got.cut_bin) == (expected[1], expected[2])
            assert got.gain == pytest.approx(expected[0], rel=1e-12)


def test_leaf_weight_examples():
    reg = Regularization(lam=1.0, gamma=0.0)
    assert leaf_weight(0.0, 5.0, reg) == 0.0
    assert leaf_weight(-0.5, 0.25, reg) == pytest.approx(0.4, abs=1e-15)
    assert leaf_weight(1.0, 0.0, reg) == -1.0
    with pytest.raises(ZeroDivisionError):
        leaf_weight(1.0, 0.0, Regularization(lam=0.0))


def test_trivial_cut_gain_is_minus_gamma():
    reg = Regularization(lam=1.0, gamma=0.3)
    g_tot, h_tot = -2.0, 1.5
    assert split_gain(g_tot, h_tot, 0.0, 0.0, reg) == pytest.approx(-reg.gamma, abs=1e-12)


def test_empty_side_never_selected():
    # a cut with one empty child cannot beat gain > 0 when gamma >= 0
    hist = _hist([([0.4, 0.0], [0.2, 0.0], [3, 0])])
    assert best_split(hist, Regularization(lam=1.0, gamma=0.0)) is None


def test_scaling_invariance_of_argmax():
    # lam=0, gamma=0: scaling all G and H by c > 0 keeps the argmax
    rng = np.random.default_rng(1)
    reg = Regularization(lam=0.0, gamma=0.0)
    for _ in range(20):
        counts = rng.integers(1, 5, size=6)
        per_feature = [
            (rng.uniform(-1, 1, 6) * counts, rng.uniform(0.05, 0.25, 6) * counts, counts)
            for _ in range(2)
        ]
        base = best_split(_hist(per_feature), reg)
        for c in (0.5, 3.0, 17.0):
            scaled = [(g * c, h * c, cnt) for g, h, cnt in per_feature]
            got = best_split(_hist(scaled), reg)
            if base is None:
                assert got is None
            else:
                assert (got.feature_index, got.cut_bin) == (
                    base.feature_index,
                    base.cut_bin,
                )


def test_unscaled_score_selects_same_argmax():
    # the no-half, no-gamma enumeration score picks the same cut as the
    # full gain expression at gamma=0
    rng = np.random.default_rng(2)
    reg = Regularization(lam=1.0, gamma=0.0)
    for _ in range(30):
        counts = rng.integers(1, 5, size=7)
        per_feature = [
            (rng.uniform(-1, 1, 7) * counts, rng.uniform(0.05, 0.25, 7) * counts, counts)
            for _ in range(3)
        ]
        hist = _hist(per_feature)
        decision = best_split(hist, reg)
        best_score = None
        for fh in hist.histograms:
            for b in range(fh.n_bins - 1):
                gl = float(fh.grad[: b + 1].sum())
                hl = float(fh.hess[: b + 1].sum())
                gr = hist.total_grad - gl
                hr = hist.total_hess - hl
                score = (
                    gl**2 / (hl + reg.lam)
                    + gr**2 / (hr + reg.lam)
                    - hist.total_grad**2 / (hist.total_hess + reg.lam)
                )
                if best_score is None or score > best_score[0]:
                    best_score = (score, fh.feature_index, b)
        if decision is not None:
            assert (decision.feature_index, decision.cut_bin) == best_score[1:]


def test_min_child_count_filters_cuts():
    hist = _hist([([-0.9, 0.1, 0.8], [0.2, 0.1, 0.2], [1, 5, 1])])
    unrestricted = best_split(hist, Regularization(lam=1.0))
    restricted = best_split(hist, Regularization(lam=1.0), min_child_count=2)
    assert unrestricted is not None
    if restricted is not None:
        assert restricted.left.count >= 2 and restricted.right.count >= 2


def test_deterministic_tie_break():
    # two features with identical histograms: lowest feature index wins
    g = [-0.5, 0.5]
    h = [0.25, 0.25]
    c = [1, 1]
    hist = _hist([(g, h, c), (g, h, c)])
    decision = best_split(hist, Regularization(lam=1.0))
    assert decision.feature_index == 0


def test_split_stats_partition_totals():
    rng = np.random.default_rng(3)
    counts = rng.integers(1, 4, size=5)
    per_feature = [
        (rng.uniform(-1, 1, 5) * counts, rng.uniform(0.05, 0.25, 5) * counts, counts)
        for _ in range(2)
    ]
    hist = _hist(per_feature)
    decision = best_split(hist, Regularization(lam=1.0))
    if decision is not None:
        assert decision.left.grad + decision.right.grad == pytest.approx(
            hist.total_grad, rel=1e-12
        )
        assert decision.left.count + decision.right.count == hist.total_count


def test_negative_regularization_rejected():
    with pytest.raises(ValueError):
        Regularization(lam=-1.0)
    with pytest.raises(ValueError):
        Regularization(gamma=-0.1)
