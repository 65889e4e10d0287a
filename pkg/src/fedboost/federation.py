"""Star-topology training protocol: workers build node histograms over
their shards, the coordinator merges them, picks splits, and broadcasts
decisions.

Growth is level-wise and synchronous.  Workers never talk to each other,
and nothing per-instance ever crosses the boundary: histogram reports are
bin-level aggregates, and a worker refuses to emit a report whose smallest
nonzero bin count is below the anonymity floor k (unless enforcement is
switched off for tiny fixtures).
"""

from __future__ import annotations

import socket
from dataclasses import dataclass, field

import numpy as np

from . import wire
from .binning import BinLayoutSet, bin_matrix, build_layout_from_counts
from .histograms import NodeHistogramSet, accumulate_binned, merge, merge_all
from .loss import grad_stats, loss_vec
from .splits import Regularization, SplitDecision, best_split, leaf_weight
from .tree import Model, TreeNode, predict_margin_batch

NODE_DONE = -1


class AnonymityViolation(RuntimeError):
    """A histogram report would expose a bin smaller than the floor k."""


class TrainingWorker:
    """One federated party: holds its horizontal shard and answers
    coordinator messages.  All state mutation happens through handle()."""

    def __init__(
        self,
        worker_id: int,
        train_features: np.ndarray,
        train_labels: np.ndarray,
        update_features: np.ndarray | None = None,
        update_labels: np.ndarray | None = None,
        k: int = 1,
        k_enforcement: bool = True,
    ):
        self.worker_id = worker_id
        self.train_features = np.asarray(train_features, dtype=np.float64)
        self.train_labels = np.asarray(train_labels)
        self.update_features = (
            np.asarray(update_features, dtype=np.float64)
            if update_features is not None
            else np.empty((0, self.train_features.shape[1]))
        )
        self.update_labels = (
            np.asarray(update_labels) if update_labels is not None else np.empty(0, dtype=np.int8)
        )
        self.k = k
        self.k_enforcement = k_enforcement
        self.violations_observed = 0  # counted even when enforcement is off

        self.layouts: BinLayoutSet | None = None
        self.learning_rate = 0.1
        self.phase = 0
        self._bins_train = None
        self._bins_update = None
        self._margins_train = None
        self._margins_update = None
        self._grad_train = self._hess_train = None
        self._grad_update = self._hess_update = None
        self._node_train = None
        self._node_update = None
        self._wrong_mask = None

    # -- message dispatch ------------------------------------------------

    def handle(self, msg):
        if isinstance(msg, wire.SummaryRequest):
            return self._value_summary(msg)
        if isinstance(msg, wire.LayoutShare):
            return self._on_layouts(msg)
        if isinstance(msg, wire.ModelSync):
            return self._on_model(msg)
        if isinstance(msg, wire.StartTree):
            return self._on_start_tree(msg)
        if isinstance(msg, wire.HistogramRequest):
            return self._report(msg)
        if isinstance(msg, wire.SplitBroadcast):
            return self._on_split(msg)
        if isinstance(msg, wire.LeafBroadcast):
            return self._on_leaf(msg)
        if isinstance(msg, wire.RoundSync):
            return self._on_round_sync(msg)
        if isinstance(msg, wire.Shutdown):
            return wire.Ack(round=msg.round)
        raise wire.ProtocolError(f"worker cannot handle {type(msg).__name__}")

    def _value_summary(self, msg):
        values, counts = [], []
        for f in range(self.train_features.shape[1]):
            u, c = np.unique(self.train_features[:, f], return_counts=True)
            values.append(u)
            counts.append(c.astype(np.int64))
        return wire.ValueSummary(
            worker_id=self.worker_id, values=values, counts=counts, round=msg.round
        )

    def _on_layouts(self, msg):
        self.layouts = msg.layouts
        self._bins_train = bin_matrix(self.train_features, self.layouts)
        if self.update_features.shape[0]:
            self._bins_update = bin_matrix(self.update_features, self.layouts)
        else:
            self._bins_update = np.empty((0, self.layouts.n_features), dtype=np.int32)
        return wire.Ack(round=msg.round)

    def _on_model(self, msg):
        self.learning_rate = msg.model.learning_rate
        self._margins_train = predict_margin_batch(msg.model, self.train_features)
        self._margins_update = predict_margin_batch(msg.model, self.update_features)
        return wire.Ack(round=msg.round)

    def _on_start_tree(self, msg):
        if self.layouts is None or self._margins_train is None:
            raise wire.ProtocolError("layouts or model not received before StartTree")
        self.phase = msg.phase
        self._grad_train, self._hess_train = grad_stats(
            self.train_labels, self._margins_train
        )
        self._node_train = np.zeros(self.train_features.shape[0], dtype=np.int64)
        if self.phase == 1:
            # strict 0.5 probability threshold == margin > 0
            pred = self._margins_update > 0
            self._wrong_mask = pred != (self.update_labels == 1)
            self._grad_update, self._hess_update = grad_stats(
                self.update_labels, self._margins_update
            )
            self._node_update = np.zeros(self.update_features.shape[0], dtype=np.int64)
        return wire.Ack(round=msg.round)

    def _report(self, msg):
        hist = self.node_histograms(msg.node_id)
        m = hist.min_nonzero_count()
        if 0 < m < self.k:
            self.violations_observed += 1
            if self.k_enforcement:
                raise AnonymityViolation(
                    f"worker {self.worker_id}: node {msg.node_id} report has a "
                    f"bin with {m} < k={self.k} instances"
                )
        return wire.HistogramReport(
            tree_index=msg.tree_index,
            node_id=msg.node_id,
            worker_id=self.worker_id,
            hist=hist,
            round=msg.round,
        )

    def node_histograms(self, node_id: int, filter: str = "auto") -> NodeHistogramSet:
        """Histograms for one tree node.

        filter: 'base' = training rows only, 'wrong' = misclassified
        update rows only, 'integrated' = their merge; 'auto' picks base
        during initial training and integrated during the update phase.
        """
        if filter == "auto":
            filter = "integrated" if self.phase == 1 else "base"
        bin_counts = self.layouts.bin_counts()
        base = accumulate_binned(
            self._bins_train,
            np.nonzero(self._node_train == node_id)[0],
            self._grad_train,
            self._hess_train,
            bin_counts,
            node_id,
        )
        if filter == "base":
            return base
        rows = np.nonzero((self._node_update == node_id) & self._wrong_mask)[0]
        wrong = accumulate_binned(
            self._bins_update, rows, self._grad_update, self._hess_update,
            bin_counts, node_id,
        )
        if filter == "wrong":
            return wrong
        return merge(base, wrong)

    def _on_split(self, msg):
        at = self._node_train == msg.node_id
        left = self.train_features[:, msg.feature] <= msg.threshold
        self._node_train[at & left] = 2 * msg.node_id + 1
        self._node_train[at & ~left] = 2 * msg.node_id + 2
        if self.phase == 1:
            at_u = self._node_update == msg.node_id
            left_u = self.update_features[:, msg.feature] <= msg.threshold
            self._node_update[at_u & left_u] = 2 * msg.node_id + 1
            self._node_update[at_u & ~left_u] = 2 * msg.node_id + 2
        return wire.Ack(round=msg.round)

    def _on_leaf(self, msg):
        at = self._node_train == msg.node_id
        self._margins_train[at] += self.learning_rate * msg.weight
        self._node_train[at] = NODE_DONE
        if self.phase == 1:
            at_u = self._node_update == msg.node_id
            self._margins_update[at_u] += self.learning_rate * msg.weight
            self._node_update[at_u] = NODE_DONE
        return wire.Ack(round=msg.round)

    def _on_round_sync(self, msg):
        loss_sum = float(loss_vec(self.train_labels, self._margins_train).sum())
        wrong = 0
        if self._margins_update is not None and self.update_labels.size:
            pred = self._margins_update > 0
            wrong = int(np.sum(pred != (self.update_labels == 1)))
        return wire.RoundComplete(
            loss_sum=loss_sum,
            row_count=int(self.train_labels.size),
            wrong_count=wrong,
            round=msg.round,
        )


# -- transports ----------------------------------------------------------


class InProcessTransport:
    """Direct method-call transport; optionally pushes every message
    through the byte codec to exercise the wire format."""

    def __init__(self, workers: list[TrainingWorker], through_codec: bool = False):
        self.workers = {w.worker_id: w for w in workers}
        self.through_codec = through_codec

    @property
    def worker_ids(self) -> list[int]:
        return sorted(self.workers)

    def request(self, worker_id: int, msg):
        if self.through_codec:
            msg = wire.decode(wire.encode(msg))
        reply = self.workers[worker_id].handle(msg)
        if self.through_codec:
            reply = wire.decode(wire.encode(reply))
        return reply

    def broadcast(self, msg) -> dict:
        return {wid: self.request(wid, msg) for wid in self.worker_ids}

    def close(self):
        pass


class SocketTransport:
    """One duplex byte stream per worker; request/reply frames."""

    def __init__(self, conns: dict[int, socket.socket]):
        self.conns = conns

    @classmethod
    def listen(cls, host: str, port: int, n_workers: int, timeout: float = 60.0):
        """Accept n_workers connections; each starts with a Hello frame."""
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((host, port))
        server.listen(n_workers)
        server.settimeout(timeout)
        conns: dict[int, socket.socket] = {}
        try:
            while len(conns) < n_workers:
                conn, _ = server.accept()
                hello = wire.decode(wire.read_frame(conn))
                if not isinstance(hello, wire.Hello):
                    raise wire.ProtocolError(
                        f"expected Hello, got {type(hello).__name__}"
                    )
                if hello.worker_id in conns:
                    raise wire.ProtocolError(
                        f"duplicate worker id {hello.worker_id}"
                    )
                conn.sendall(wire.encode(wire.Ack()))
                conns[hello.worker_id] = conn
        finally:
            server.close()
        return cls(conns)

    @property
    def worker_ids(self) -> list[int]:
        return sorted(self.conns)

    def request(self, worker_id: int, msg):
        conn = self.conns[worker_id]
        conn.sendall(wire.encode(msg))
        frame = wire.read_frame(conn)
        if frame is None:
            raise wire.ProtocolError(f"worker {worker_id} closed the connection")
        return wire.decode(frame)

    def broadcast(self, msg) -> dict:
        return {wid: self.request(wid, msg) for wid in self.worker_ids}

    def close(self):
        for conn in self.conns.values():
            conn.close()


def serve_worker(worker: TrainingWorker, host: str, port: int) -> None:
    """Connect to the coordinator and answer requests until Shutdown."""
    conn = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    conn.connect((host, port))
    try:
        conn.sendall(wire.encode(wire.Hello(worker_id=worker.worker_id)))
        ack = wire.decode(wire.read_frame(conn))
        if not isinstance(ack, wire.Ack):
            raise wire.ProtocolError(f"handshake failed: {type(ack).__name__}")
        while True:
            frame = wire.read_frame(conn)
            if frame is None:
                break
            msg = wire.decode(frame)
            conn.sendall(wire.encode(worker.handle(msg)))
            if isinstance(msg, wire.Shutdown):
                break
    finally:
        conn.close()


# -- coordinator ---------------------------------------------------------


@dataclass
class RoundStats:
    mean_loss: float
    wrong_count: int


class Coordinator:
    """Drives level-wise synchronous tree growth over a transport."""

    def __init__(
        self,
        transport,
        reg: Regularization,
        max_depth: int = 4,
        min_child_count: int = 1,
        k: int = 1,
        k_enforcement: bool = True,
    ):
        self.transport = transport
        self.reg = reg
        self.max_depth = max_depth
        self.min_child_count = min_child_count
        self.k = k
        self.k_enforcement = k_enforcement
        self.round = 0
        self.layouts: BinLayoutSet | None = None
        self.audit_violations = 0

    def build_layouts(self, v: int | None, k: int) -> BinLayoutSet:
        """Merge per-worker value summaries and build shared layouts.
        v=None means one bin per distinct value (the original dimension)."""
        summaries = self.transport.broadcast(wire.SummaryRequest(round=self.round))
        d = len(next(iter(summaries.values())).values)
        layouts = []
        n_total = None
        for f in range(d):
            vals = np.concatenate([summaries[w].values[f] for w in sorted(summaries)])
            cnts = np.concatenate([summaries[w].counts[f] for w in sorted(summaries)])
            uniq, inv = np.unique(vals, return_inverse=True)
            counts = np.bincount(inv, weights=cnts.astype(np.float64)).astype(np.int64)
            n_total = int(counts.sum())
            vf = v if v is not None else n_total
            layouts.append(build_layout_from_counts(uniq, counts, vf, k, feature_index=f))
        layout_set = BinLayoutSet(layouts=layouts, v=v if v is not None else n_total, k=k)
        self.layouts = layout_set
        self.transport.broadcast(wire.LayoutShare(layouts=layout_set, round=self.round))
        return layout_set

    def share_layouts(self, layout_set: BinLayoutSet) -> None:
        self.layouts = layout_set
        self.transport.broadcast(wire.LayoutShare(layouts=layout_set, round=self.round))

    def sync_model(self, model: Model) -> None:
        self.transport.broadcast(wire.ModelSync(model=model, round=self.round))

    def _gather_node(self, tree_index: int, node_id: int) -> NodeHistogramSet:
        reports = []
        for wid in self.transport.worker_ids:
            rep = self.transport.request(
                wid, wire.HistogramRequest(tree_index, node_id, round=self.round)
            )
            m = rep.hist.min_nonzero_count()
            if 0 < m < self.k:
                self.audit_violations += 1
                if self.k_enforcement:
                    raise AnonymityViolation(
                        f"coordinator: report from worker {wid} for node "
                        f"{node_id} has a bin with {m} < k={self.k} instances"
                    )
            reports.append(rep.hist)
        return merge_all(reports)

    def grow_tree(self, tree_index: int, phase: int) -> TreeNode:
        self.transport.broadcast(
            wire.StartTree(tree_index=tree_index, phase=phase, round=self.round)
        )
        nodes: dict[int, TreeNode] = {}
        # FIFO: parents are always decided (and broadcast) before children
        queue: list[tuple[int, int, tuple | None]] = [(0, 0, None)]
        while queue:
            node_id, depth, known = queue.pop(0)
            if depth >= self.max_depth and known is not None:
                # stats inherited from the parent's split decision
                g, h, _ = known
                self._emit_leaf(tree_index, node_id, nodes, g, h)
                continue
            hist = self._gather_node(tree_index, node_id)
            decision = (
                best_split(hist, self.reg, self.min_child_count)
                if depth < self.max_depth
                else None
            )
            if decision is None:
                self._emit_leaf(
                    tree_index, node_id, nodes, hist.total_grad, hist.total_hess
                )
                continue
            threshold = float(
                self.layouts.layouts[decision.feature_index].cuts[decision.cut_bin]
            )
            self.transport.broadcast(
                wire.SplitBroadcast(
                    tree_index=tree_index,
                    node_id=node_id,
                    feature=decision.feature_index,
                    threshold=threshold,
                    round=self.round,
                )
            )
            nodes[node_id] = TreeNode(feature=decision.feature_index, cut=threshold)
            left, right = decision.left, decision.right
            queue.append((2 * node_id + 1, depth + 1, (left.grad, left.hess, left.count)))
            queue.append((2 * node_id + 2, depth + 1, (right.grad, right.hess, right.count)))
        return self._link(nodes, 0)

    def _emit_leaf(self, tree_index, node_id, nodes, grad, hess) -> None:
        w = leaf_weight(grad, hess, self.reg)
        self.transport.broadcast(
            wire.LeafBroadcast(
                tree_index=tree_index, node_id=node_id, weight=w, round=self.round
            )
        )
        nodes[node_id] = TreeNode(weight=w)

    def _link(self, nodes: dict[int, TreeNode], node_id: int) -> TreeNode:
        node = nodes[node_id]
        if node.feature >= 0:
            node.left = self._link(nodes, 2 * node_id + 1)
            node.right = self._link(nodes, 2 * node_id + 2)
        return node

    def round_stats(self) -> RoundStats:
        replies = self.transport.broadcast(wire.RoundSync(round=self.round))
        loss = sum(r.loss_sum for r in replies.values())
        n = sum(r.row_count for r in replies.values())
        wrong = sum(r.wrong_count for r in replies.values())
        return RoundStats(mean_loss=loss / n if n else 0.0, wrong_count=wrong)

    def shutdown(self) -> None:
        self.transport.broadcast(wire.Shutdown(round=self.round))
        self.transport.close()
