"""Acceptance gate: one test per stated criterion, each printing a single
pass/fail line.  The two credit-card criteria need the public fraud CSV
(see README); they skip with a clear reason when it is not present.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines inline.
"""

import socket
import threading
import time

import numpy as np
import pytest

from fedboost.binning import InfeasibleLayout, build_layout, build_layout_set
from fedboost.data import Dataset, load_csv, partition, shard
from fedboost.federation import InProcessTransport, SocketTransport, TrainingWorker, serve_worker
from fedboost.histograms import merge_all
from fedboost.loss import grad_pair, loss_value, sigmoid
from fedboost.metrics import confusion, f1, pr_auc, roc_auc
from fedboost.splits import Regularization, best_split, leaf_weight
from fedboost.trainer import FederatedSession, TrainConfig, build_workers
from fedboost.tree import predict_proba_batch, serialize_model

from conftest import creditcard_path, make_imbalanced
from reference_exact import train_exact, trees_equal


def _verdict(criterion: int, ok: bool, detail: str) -> None:
    print(f"\nacceptance criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def _needs_creditcard():
    path = creditcard_path()
    if path is None:
        pytest.skip(
            "credit-card fraud CSV not present; place it at data/creditcard.csv "
            "or set FEDBOOST_CREDITCARD_CSV to run this criterion"
        )
    return path


def _creditcard_run(v):
    path = _needs_creditcard()
    ds = load_csv(path)
    split = partition(ds, 179363, 59875, 45569, seed=0)
    cfg = TrainConfig(
        rounds_initial=100, rounds_update=30, max_depth=4, learning_rate=0.1,
        lam=1.0, gamma=0.0, v=v, k=1, n_workers=1, seed=0,
    )
    session = FederatedSession(ds, split, cfg)
    model, _ = session.train_initial()
    scores = predict_proba_batch(model, ds.features[split.test])
    labels = ds.labels[split.test]
    f1_before = f1(confusion(scores, labels, 0.5))
    model, _ = session.sparse_update(model)
    scores = predict_proba_batch(model, ds.features[split.test])
    return f1_before, f1(confusion(scores, labels, 0.5)), roc_auc(scores, labels)


def test_criterion_1_table_band_reproduction():
    f1_before, f1_after, auc = _creditcard_run(v=None)
    ok = f1_after >= 0.87 and auc >= 0.95 and f1_after > f1_before
    _verdict(
        1, ok,
        f"original dimension: F1 {f1_before:.4f} -> {f1_after:.4f}, ROC-AUC {auc:.4f}",
    )


def test_criterion_2_virtual_sample_tradeoff():
    _, f1_full, _ = _creditcard_run(v=None)
    _, f1_405, _ = _creditcard_run(v=405)
    ok = (f1_full - f1_405) <= 0.02 and 0.86 <= f1_405 <= 0.92
    _verdict(2, ok, f"F1 full={f1_full:.4f} vs v=405 {f1_405:.4f}")


def test_criterion_3_exact_oracle_equivalence():
    rng = np.random.default_rng(42)
    reg = Regularization(lam=1.0, gamma=0.0)
    checked = 0
    for trial in range(20):
        n = int(rng.integers(30, 201))
        d = int(rng.integers(1, 6))
        ds = make_imbalanced(n, d=d, pos_rate=0.25, seed=1000 + trial)
        split = partition(ds, n, 0, 0, seed=0)
        cfg = TrainConfig(
            rounds_initial=2, rounds_update=0, max_depth=3, v=None, k=1,
            n_workers=1, seed=0,
        )
        model, _ = FederatedSession(ds, split, cfg).train_initial()
        ref = train_exact(
            ds.features, ds.labels, n_rounds=2, max_depth=3,
            learning_rate=0.1, reg=reg,
        )
        assert model.n_trees == ref.n_trees
        for a, b in zip(model.trees, ref.trees):
            assert trees_equal(a, b, tol=1e-9), f"fixture {trial} (n={n}, d={d})"
        checked += 1
    _verdict(3, checked == 20, f"{checked}/20 random fixtures match the exact reference")


def test_criterion_4_partition_invariance():
    ds = make_imbalanced(1200, d=4, pos_rate=0.1, seed=5)
    split = partition(ds, 800, 250, 150, seed=0)
    docs = {}
    for W in (1, 2, 4):
        cfg = TrainConfig(
            rounds_initial=5, rounds_update=3, max_depth=3, v=24, k=1,
            n_workers=W, seed=0,
        )
        model, _, _ = FederatedSession(ds, split, cfg).run_full()
        docs[W] = serialize_model(model).encode()
    byte_identical = docs[1] == docs[2] == docs[4]

    # merged multi-worker histograms equal the single-worker histogram
    layouts = build_layout_set(ds.features, v=24, k=1)

    def root_hist(n_workers):
        from fedboost import wire

        shards = shard(np.arange(ds.n_rows), n_workers, seed=0)
        parts = []
        for i, s in enumerate(shards):
            w = TrainingWorker(i, ds.features[s.rows], ds.labels[s.rows])
            w.handle(wire.LayoutShare(layouts=layouts, round=0))
            from fedboost.tree import Model

            w.handle(wire.ModelSync(model=Model(), round=0))
            w.handle(wire.StartTree(tree_index=0, phase=0, round=1))
            parts.append(w.node_histograms(0, "base"))
        return merge_all(parts)

    single = root_hist(1)
    hist_ok = True
    for W in (2, 4):
        merged = root_hist(W)
        for a, b in zip(merged.histograms, single.histograms):
            hist_ok &= bool(np.allclose(a.grad, b.grad, rtol=1e-9, atol=0))
            hist_ok &= bool(np.allclose(a.hess, b.hess, rtol=1e-9, atol=0))
            hist_ok &= bool(np.array_equal(a.count, b.count))
    _verdict(
        4, byte_identical and hist_ok,
        f"models byte-identical across W=1,2,4: {byte_identical}; "
        f"merged histograms match single worker: {hist_ok}",
    )


def test_criterion_5_gradient_finite_differences():
    rng = np.random.default_rng(7)
    eps = 1e-4
    worst_g = worst_h = 0.0
    for _ in range(1000):
        y = int(rng.integers(0, 2))
        m = float(rng.uniform(-6, 6))
        pair = grad_pair(y, m)
        g, h = pair.grad, pair.hess
        num_g = (loss_value(y, m + eps) - loss_value(y, m - eps)) / (2 * eps)
        num_h = (loss_value(y, m + eps) - 2 * loss_value(y, m) + loss_value(y, m - eps)) / eps**2
        worst_g = max(worst_g, abs(g - num_g))
        worst_h = max(worst_h, abs(h - num_h))
    ok = worst_g < 1e-6 and worst_h < 1e-4
    _verdict(5, ok, f"max |grad err| {worst_g:.2e} < 1e-6, max |hess err| {worst_h:.2e} < 1e-4")


def test_criterion_6_anonymity_enforcement():
    # a full run with enforcement on: shallow trees keep every transmitted
    # report at the root, where the layout floor holds per worker
    ds = make_imbalanced(2000, d=3, pos_rate=0.2, seed=9)
    split = partition(ds, 1400, 400, 200, seed=0)
    cfg = TrainConfig(
        rounds_initial=5, rounds_update=3, max_depth=1, v=5, k=25,
        n_workers=2, seed=0, k_enforcement=True,
    )
    session = FederatedSession(ds, split, cfg)
    session.run_full()
    worker_violations = sum(w.violations_observed for w in session.workers)
    audit = session.coordinator.audit_violations
    run_clean = worker_violations == 0 and audit == 0

    # infeasible layouts are rejected outright
    with pytest.raises(InfeasibleLayout):
        build_layout(np.arange(10.0), v=6, k=2)
    _verdict(
        6, run_clean,
        f"full run with enforcement on: {worker_violations} worker violations, "
        f"{audit} audit violations; infeasible (v,k) rejected",
    )


def test_criterion_7_metrics_oracles():
    rng = np.random.default_rng(11)
    scores = rng.random(200)
    labels = (rng.random(200) < 0.15).astype(int)
    labels[:2] = [0, 1]

    cm = confusion(scores, labels, 0.4)
    tp = sum(1 for s, y in zip(scores, labels) if s > 0.4 and y == 1)
    fp = sum(1 for s, y in zip(scores, labels) if s > 0.4 and y == 0)
    fn = sum(1 for s, y in zip(scores, labels) if s <= 0.4 and y == 1)
    tn = 200 - tp - fp - fn
    confusion_ok = (cm.tp, cm.fp, cm.fn, cm.tn) == (tp, fp, fn, tn)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1_ok = abs(f1(cm) - (2 * p * r / (p + r) if p + r else 0.0)) < 1e-15

    pos = scores[labels == 1]
    neg = scores[labels == 0]
    pairs = sum((1.0 if a > b else 0.5 if a == b else 0.0) for a in pos for b in neg)
    auc_ok = abs(roc_auc(scores, labels) - pairs / (len(pos) * len(neg))) < 1e-12

    perfect_scores = np.where(labels == 1, 0.9, 0.1)
    perfect_ok = (
        roc_auc(perfect_scores, labels) == 1.0 and pr_auc(perfect_scores, labels) == 1.0
    )
    ok = confusion_ok and f1_ok and auc_ok and perfect_ok
    _verdict(
        7, ok,
        f"confusion exact: {confusion_ok}, F1 exact: {f1_ok}, "
        f"pairwise ROC-AUC to 1e-12: {auc_ok}, perfect classifier 1.0: {perfect_ok}",
    )


def test_criterion_8_gain_and_leaf_formulas():
    from fedboost.histograms import FeatureHistogram, NodeHistogramSet

    reg = Regularization(lam=1.0, gamma=0.0)

    def direct_gain(gl, hl, gr, hr):
        return 0.5 * (
            gl**2 / (hl + reg.lam)
            + gr**2 / (hr + reg.lam)
            - (gl + gr) ** 2 / (hl + hr + reg.lam)
        ) - reg.gamma

    worked = abs(direct_gain(-0.5, 0.25, 0.5, 0.25) - 0.2) < 1e-12
    hist = NodeHistogramSet(
        0,
        [
            FeatureHistogram(
                0,
                np.array([-0.5, 0.5]),
                np.array([0.25, 0.25]),
                np.array([1, 1], dtype=np.int64),
            )
        ],
        0.0, 0.5, 2,
    )
    decision = best_split(hist, reg)
    worked &= abs(decision.gain - 0.2) < 1e-12
    worked &= abs(leaf_weight(-0.5, 0.25, reg) - 0.4) < 1e-12

    rng = np.random.default_rng(13)
    random_ok = True
    for _ in range(100):
        n_bins = int(rng.integers(2, 10))
        counts = rng.integers(1, 5, n_bins)
        g = rng.uniform(-1, 1, n_bins) * counts
        h = rng.uniform(0.05, 0.25, n_bins) * counts
        hist = NodeHistogramSet(
            0,
            [FeatureHistogram(0, g, h, counts.astype(np.int64))],
            float(g.sum()), float(h.sum()), int(counts.sum()),
        )
        decision = best_split(hist, reg)
        best = max(
            direct_gain(
                float(g[: b + 1].sum()), float(h[: b + 1].sum()),
                float(g[b + 1 :].sum()), float(h[b + 1 :].sum()),
            )
            for b in range(n_bins - 1)
        )
        if decision is None:
            random_ok &= best <= 0
        else:
            random_ok &= abs(decision.gain - best) < 1e-12
            gl = float(g[: decision.cut_bin + 1].sum())
            hl = float(h[: decision.cut_bin + 1].sum())
            random_ok &= (
                abs(
                    leaf_weight(gl, hl, reg)
                    - (-gl / (hl + reg.lam))
                )
                < 1e-12
            )
    _verdict(
        8, worked and random_ok,
        f"worked example exact: {worked}, 100 random histograms to 1e-12: {random_ok}",
    )


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_criterion_9_transport_equivalence():
    ds = make_imbalanced(5000, d=4, pos_rate=0.08, seed=17)
    split = partition(ds, 3500, 1000, 500, seed=0)
    cfg = TrainConfig(
        rounds_initial=3, rounds_update=2, max_depth=3, v=32, k=1,
        n_workers=2, seed=0,
    )

    model, _, _ = FederatedSession(ds, split, cfg).run_full()
    inproc_doc = serialize_model(model)

    port = _free_port()
    workers = build_workers(ds, split, cfg)

    def serve(worker):
        for _ in range(100):
            try:
                serve_worker(worker, "127.0.0.1", port)
                return
            except ConnectionRefusedError:
                time.sleep(0.05)

    threads = [threading.Thread(target=serve, args=(w,)) for w in workers]
    for t in threads:
        t.start()
    transport = SocketTransport.listen("127.0.0.1", port, cfg.n_workers)
    session = FederatedSession(None, None, cfg, transport=transport)
    model, _, _ = session.run_full()
    session.close()
    for t in threads:
        t.join(timeout=30)
    socket_doc = serialize_model(model)
    _verdict(
        9, socket_doc == inproc_doc,
        "socket-mode model identical to in-process model on a 5000-row subsample",
    )
