"""Boosting orchestration: initial federated training on the train
partition, then sparse update rounds that fold in the currently
misclassified update instances (integrated histograms = base + wrong)."""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from .binning import BinLayoutSet
from .data import Dataset, SplitIndices, shard
from .federation import Coordinator, InProcessTransport, TrainingWorker
from .splits import Regularization
from .tree import Model, predict_proba_batch


@dataclass
class TrainConfig:
    rounds_initial: int = 100
    rounds_update: int = 30
    max_depth: int = 4
    learning_rate: float = 0.1
    lam: float = 1.0
    gamma: float = 0.0
    v: int | None = None      # None = one bin per distinct value
    k: int = 1
    n_workers: int = 1
    seed: int = 0
    min_child_count: int = 1
    k_enforcement: bool = True

    def __post_init__(self):
        if not (0 < self.learning_rate <= 1):
            raise ValueError(f"learning rate must be in (0, 1], got {self.learning_rate}")
        if self.max_depth < 1 or self.n_workers < 1 or self.min_child_count < 1:
            raise ValueError(f"invalid config: {self}")

    def regularization(self) -> Regularization:
        return Regularization(lam=self.lam, gamma=self.gamma)


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)       # mean train loss per round
    wrong_counts: list[int] = field(default_factory=list)   # update phase only
    wall_time: float = 0.0

    def loss_csv(self) -> str:
        lines = ["round,loss"]
        lines += [f"{i},{loss!r}" for i, loss in enumerate(self.losses)]
        return "\n".join(lines) + "\n"


def layouts_fingerprint(layouts: BinLayoutSet) -> str:
    return hashlib.sha256(layouts.to_json().encode("utf-8")).hexdigest()[:16]


def wrongly_classified(
    model: Model, features: np.ndarray, labels: np.ndarray, threshold: float = 0.5
) -> np.ndarray:
    """Row indices whose predicted class differs from the label."""
    pred = predict_proba_batch(model, features) > threshold
    return np.nonzero(pred != (np.asarray(labels) == 1))[0]


def build_workers(
    dataset: Dataset, split: SplitIndices, cfg: TrainConfig
) -> list[TrainingWorker]:
    """Shard the train and update partitions across cfg.n_workers parties."""
    train_shards = shard(split.train, cfg.n_workers, cfg.seed)
    update_shards = (
        shard(split.update, cfg.n_workers, cfg.seed + 1)
        if split.update.size >= cfg.n_workers
        else [None] * cfg.n_workers
    )
    workers = []
    for w in range(cfg.n_workers):
        upd = update_shards[w]
        workers.append(
            TrainingWorker(
                worker_id=w,
                train_features=dataset.features[train_shards[w].rows],
                train_labels=dataset.labels[train_shards[w].rows],
                update_features=dataset.features[upd.rows] if upd is not None else None,
                update_labels=dataset.labels[upd.rows] if upd is not None else None,
                k=cfg.k,
                k_enforcement=cfg.k_enforcement,
            )
        )
    return workers


class FederatedSession:
    """Owns the workers, transport, and coordinator for one training run.

    The transport_factory hook lets tests swap the in-process transport
    for a codec-roundtrip one; a prebuilt transport (socket mode, where
    workers live in other processes) can be passed instead of a dataset.
    """

    def __init__(
        self,
        dataset: Dataset | None,
        split: SplitIndices | None,
        cfg: TrainConfig,
        transport_factory=None,
        transport=None,
    ):
        self.dataset = dataset
        self.split = split
        self.cfg = cfg
        if transport is not None:
            self.workers = []
            self.transport = transport
        else:
            self.workers = build_workers(dataset, split, cfg)
            if transport_factory is None:
                self.transport = InProcessTransport(self.workers)
            else:
                self.transport = transport_factory(self.workers)
        self.coordinator = Coordinator(
            self.transport,
            reg=cfg.regularization(),
            max_depth=cfg.max_depth,
            min_child_count=cfg.min_child_count,
            k=cfg.k,
            k_enforcement=cfg.k_enforcement,
        )
        self.layouts: BinLayoutSet | None = None

    def prepare_layouts(self) -> BinLayoutSet:
        if self.layouts is None:
            self.layouts = self.coordinator.build_layouts(self.cfg.v, self.cfg.k)
        return self.layouts

    def _run_rounds(self, model: Model, n_rounds: int, phase: int) -> TrainReport:
        report = TrainReport()
        start = time.monotonic()
        coord = self.coordinator
        for _ in range(n_rounds):
            coord.round += 1
            tree = coord.grow_tree(model.n_trees, phase=phase)
            model.trees.append(tree)
            stats = coord.round_stats()
            report.losses.append(stats.mean_loss)
            if phase == 1:
                report.wrong_counts.append(stats.wrong_count)
        report.wall_time = time.monotonic() - start
        return report

    def train_initial(self) -> tuple[Model, TrainReport]:
        layouts = self.prepare_layouts()
        model = Model(
            base_margin=0.0,
            learning_rate=self.cfg.learning_rate,
            trees=[],
            bin_layouts_ref=layouts_fingerprint(layouts),
        )
        self.coordinator.sync_model(model)
        report = self._run_rounds(model, self.cfg.rounds_initial, phase=0)
        return model, report

    def sparse_update(self, model: Model) -> tuple[Model, TrainReport]:
        layouts = self.prepare_layouts()
        ref = layouts_fingerprint(layouts)
        if model.bin_layouts_ref and model.bin_layouts_ref != ref:
            raise ValueError(
                f"bin layout mismatch: model was trained with layouts "
                f"{model.bin_layouts_ref}, session built {ref}"
            )
        self.coordinator.sync_model(model)
        report = self._run_rounds(model, self.cfg.rounds_update, phase=1)
        return model, report

    def run_full(self) -> tuple[Model, TrainReport, TrainReport]:
        model, initial = self.train_initial()
        model, update = self.sparse_update(model)
        return model, initial, update

    def close(self) -> None:
        self.coordinator.shutdown()
