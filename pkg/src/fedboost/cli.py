"""Batch command-line harness: data preparation, federated training, the
sparse update pass, evaluation, and the privacy/accuracy dimension sweep.

Exit codes: 0 success, 1 usage error, 2 data error, 3 infeasible
configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .binning import InfeasibleLayout
from .data import DataError, Dataset, SplitIndices, load_csv, partition
from .federation import SocketTransport, serve_worker
from .metrics import (
    accuracy,
    confusion,
    curve_to_csv,
    f1,
    pr_auc,
    pr_curve,
    precision,
    recall,
    roc_auc,
    roc_curve,
)
from .trainer import FederatedSession, TrainConfig, build_workers
from .tree import deserialize_model, predict_proba_batch, serialize_model

PAPER_SIZES = (179363, 59875, 45569)

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INFEASIBLE = 3


def _seed_default() -> int:
    return int(os.environ.get("FEDBOOST_SEED", "0"))


def _parse_bins(text: str) -> int | None:
    if text == "full":
        return None
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"bin count must be >= 1 or 'full', got {text}")
    return v


def _parse_addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host:
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    return host, int(port)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--update-rounds", type=int, default=30)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--rate", type=float, default=0.1)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--bins", type=_parse_bins, default="full",
                   help="virtual-sample bins per feature, or 'full' for one per distinct value")
    p.add_argument("--k", type=int, default=1, help="anonymity floor per transmitted bin")
    p.add_argument("--no-k-enforcement", action="store_true",
                   help="allow sub-k bins in outgoing reports (test fixtures only)")
    p.add_argument("--min-child-count", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--transport", choices=("inproc", "socket"), default="inproc")
    p.add_argument("--listen", type=_parse_addr, default=None,
                   help="coordinator address for socket mode")


def _config_from_args(args) -> TrainConfig:
    seed = args.seed if args.seed is not None else _seed_default()
    return TrainConfig(
        rounds_initial=args.rounds,
        rounds_update=args.update_rounds,
        max_depth=args.depth,
        learning_rate=args.rate,
        lam=args.lam,
        gamma=args.gamma,
        v=args.bins if args.bins != "full" else None,
        k=args.k,
        n_workers=args.workers,
        seed=seed,
        min_child_count=args.min_child_count,
        k_enforcement=not args.no_k_enforcement,
    )


def _load_inputs(args) -> tuple[Dataset, SplitIndices]:
    ds = load_csv(args.data, label_column=args.label_column)
    split = SplitIndices.from_json(Path(args.splits).read_text())
    return ds, split


def _check_feasible(ds: Dataset, split: SplitIndices, cfg: TrainConfig) -> None:
    n = split.train.size
    v = cfg.v if cfg.v is not None else n
    if v * cfg.k > n:
        raise InfeasibleLayout(
            f"v*k = {v}*{cfg.k} exceeds the {n} training rows"
        )


def _make_session(ds, split, cfg, args) -> FederatedSession:
    if args.transport == "socket":
        if args.listen is None:
            raise argparse.ArgumentTypeError("socket transport requires --listen")
        host, port = args.listen
        transport = SocketTransport.listen(host, port, cfg.n_workers)
        return FederatedSession(ds, split, cfg, transport=transport)
    return FederatedSession(ds, split, cfg)


def cmd_prepare(args) -> int:
    ds = load_csv(args.data, label_column=args.label_column)
    seed = args.seed if args.seed is not None else _seed_default()
    n = ds.n_rows
    if args.train_frac is not None:
        update_frac = args.update_frac if args.update_frac is not None else 0.21
        train_n = int(round(n * args.train_frac))
        update_n = int(round(n * update_frac))
        test_n = n - train_n - update_n
    elif n == sum(PAPER_SIZES):
        train_n, update_n, test_n = PAPER_SIZES
    else:
        # reference proportions of the credit-card experiment
        train_n = int(round(n * PAPER_SIZES[0] / sum(PAPER_SIZES)))
        update_n = int(round(n * PAPER_SIZES[1] / sum(PAPER_SIZES)))
        test_n = n - train_n - update_n
    if min(train_n, update_n, test_n) < 0:
        raise DataError(
            f"partition sizes {train_n}/{update_n}/{test_n} are infeasible for {n} rows"
        )
    split = partition(ds, train_n, update_n, test_n, seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "splits.json").write_text(split.to_json())
    print(
        f"wrote {out_dir / 'splits.json'}: "
        f"train={train_n} update={update_n} test={test_n} seed={seed}"
    )
    return 0


def cmd_train(args) -> int:
    ds, split = _load_inputs(args)
    cfg = _config_from_args(args)
    _check_feasible(ds, split, cfg)
    session = _make_session(ds, split, cfg, args)
    try:
        model, report = session.train_initial()
    finally:
        session.close()
    Path(args.model_out).write_text(serialize_model(model))
    report_dir = Path(args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    (report_dir / "train_loss.csv").write_text(report.loss_csv())
    (report_dir / "train_report.json").write_text(
        json.dumps({"losses": report.losses, "wall_time": report.wall_time})
    )
    print(f"trained {model.n_trees} trees in {report.wall_time:.1f}s -> {args.model_out}")
    return 0


def cmd_update(args) -> int:
    ds, split = _load_inputs(args)
    cfg = _config_from_args(args)
    _check_feasible(ds, split, cfg)
    model = deserialize_model(Path(args.model_in).read_text())
    session = _make_session(ds, split, cfg, args)
    try:
        model, report = session.sparse_update(model)
    finally:
        session.close()
    Path(args.model_out).write_text(serialize_model(model))
    report_dir = Path(args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    (report_dir / "update_loss.csv").write_text(report.loss_csv())
    (report_dir / "update_report.json").write_text(
        json.dumps(
            {
                "losses": report.losses,
                "wrong_counts": report.wrong_counts,
                "wall_time": report.wall_time,
            }
        )
    )
    print(
        f"appended {len(report.losses)} update trees "
        f"({model.n_trees} total) -> {args.model_out}"
    )
    return 0


def _evaluate(model, ds: Dataset, rows: np.ndarray, threshold: float) -> dict:
    scores = predict_proba_batch(model, ds.features[rows])
    labels = ds.labels[rows]
    cm = confusion(scores, labels, threshold)
    out = {
        "threshold": threshold,
        "confusion": {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn, "tn": cm.tn},
        "accuracy": accuracy(cm),
        "precision": precision(cm),
        "recall": recall(cm),
        "f1": f1(cm),
    }
    if (labels == 1).any() and (labels == 0).any():
        out["roc_auc"] = roc_auc(scores, labels)
        out["pr_auc"] = pr_auc(scores, labels)
        out["_curves"] = (pr_curve(scores, labels), roc_curve(scores, labels))
    return out


def cmd_eval(args) -> int:
    ds, split = _load_inputs(args)
    model = deserialize_model(Path(args.model_in).read_text())
    rows = getattr(split, args.partition)
    result = _evaluate(model, ds, rows, args.threshold)
    curves = result.pop("_curves", None)
    report_dir = Path(args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    (report_dir / "metrics.json").write_text(json.dumps(result, indent=2))
    if curves is not None:
        (report_dir / "pr_curve.csv").write_text(curve_to_csv(curves[0]))
        (report_dir / "roc_curve.csv").write_text(curve_to_csv(curves[1]))
    shown = {k: v for k, v in result.items() if k != "confusion"}
    print(json.dumps(shown))
    return 0


def cmd_sweep(args) -> int:
    ds, split = _load_inputs(args)
    dims = []
    for token in args.dimensions.split(","):
        dims.append(None if token.strip() == "full" else int(token))
    dims.sort(key=lambda v: split.train.size if v is None else v)
    report_dir = Path(args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    rows = ["v,k_effective,f1,roc_auc,pr_auc,error"]
    for v in dims:
        label = "full" if v is None else str(v)
        base = _config_from_args(args)
        cfg = TrainConfig(**{**base.__dict__, "v": v})
        try:
            _check_feasible(ds, split, cfg)
            session = FederatedSession(ds, split, cfg)
            try:
                model, _, _ = session.run_full()
                k_eff = min(
                    int(lay.populations.min()) for lay in session.layouts.layouts
                )
            finally:
                session.close()
            result = _evaluate(model, ds, split.test, args.threshold)
            rows.append(
                f"{label},{k_eff},{result['f1']},"
                f"{result.get('roc_auc', '')},{result.get('pr_auc', '')},"
            )
        except (DataError, InfeasibleLayout, ValueError) as exc:
            rows.append(f"{label},,,,,{exc}")
        print(rows[-1])
    (report_dir / "sweep.csv").write_text("\n".join(rows) + "\n")
    return 0


def cmd_worker(args) -> int:
    ds, split = _load_inputs(args)
    cfg = _config_from_args(args)
    workers = build_workers(ds, split, cfg)
    if not (0 <= args.worker_id < len(workers)):
        raise argparse.ArgumentTypeError(
            f"worker id {args.worker_id} out of range for {len(workers)} workers"
        )
    host, port = args.connect
    serve_worker(workers[args.worker_id], host, port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedboost",
        description="federated gradient boosting for unbalanced anomaly detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="write train/update/test split indices")
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", default="Class")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--train-frac", type=float, default=None)
    p.add_argument("--update-frac", type=float, default=None)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="initial federated training")
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", default="Class")
    p.add_argument("--splits", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--report-dir", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("update", help="sparse federated update rounds")
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", default="Class")
    p.add_argument("--splits", required=True)
    p.add_argument("--model-in", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--report-dir", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_update)

    p = sub.add_parser("eval", help="evaluate a model on one partition")
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", default="Class")
    p.add_argument("--splits", required=True)
    p.add_argument("--model-in", required=True)
    p.add_argument("--report-dir", required=True)
    p.add_argument("--partition", choices=("train", "update", "test"), default="test")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train/update/eval across bin dimensions")
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", default="Class")
    p.add_argument("--splits", required=True)
    p.add_argument("--report-dir", required=True)
    p.add_argument("--dimensions", required=True,
                   help="comma list of bin counts, e.g. 405,full")
    p.add_argument("--threshold", type=float, default=0.5)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("worker", help="serve one shard over a socket")
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", default="Class")
    p.add_argument("--splits", required=True)
    p.add_argument("--connect", type=_parse_addr, required=True)
    p.add_argument("--worker-id", type=int, required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_worker)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InfeasibleLayout as exc:
        print(f"infeasible configuration: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
