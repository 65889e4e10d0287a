"""Regression tree structure, additive model container, and prediction.

Internal nodes store the real-valued threshold (a bin boundary), so a
trained model predicts on raw feature vectors without any bin layout.
Routing is left iff value <= cut.  The learning rate scales every leaf
contribution at prediction time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .loss import sigmoid, sigmoid_vec

MODEL_FORMAT_VERSION = 1


@dataclass
class TreeNode:
    # leaf when left is None
    weight: float = 0.0
    feature: int = -1
    cut: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())


@dataclass
class Model:
    base_margin: float = 0.0
    learning_rate: float = 0.1
    trees: list[TreeNode] = field(default_factory=list)
    bin_layouts_ref: str = ""

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def _route(node: TreeNode, x: np.ndarray) -> float:
    while not node.is_leaf:
        node = node.left if x[node.feature] <= node.cut else node.right
    return node.weight


def predict_margin(model: Model, x: np.ndarray) -> float:
    """Raw additive score for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    _check_width(model, x.shape[-1] if x.ndim else 0)
    total = sum(_route(t, x) for t in model.trees)
    return model.base_margin + model.learning_rate * total


def predict_class(model: Model, x: np.ndarray, threshold: float = 0.5) -> int:
    """1 iff predicted probability strictly exceeds the threshold."""
    return int(sigmoid(predict_margin(model, x)) > threshold)


def _check_width(model: Model, d: int) -> None:
    needed = _max_feature(model)
    if needed >= d:
        raise ValueError(f"model routes on feature {needed} but input has {d} features")


def _max_feature(model: Model) -> int:
    best = -1
    stack = list(model.trees)
    while stack:
        node = stack.pop()
        if not node.is_leaf:
            best = max(best, node.feature)
            stack.append(node.left)
            stack.append(node.right)
    return best


def tree_leaf_values(node: TreeNode, X: np.ndarray) -> np.ndarray:
    """Leaf weight reached by every row of X for one tree (unscaled)."""
    out = np.empty(X.shape[0], dtype=np.float64)
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        nd, rows = stack.pop()
        if nd.is_leaf:
            out[rows] = nd.weight
            continue
        go_left = X[rows, nd.feature] <= nd.cut
        stack.append((nd.left, rows[go_left]))
        stack.append((nd.right, rows[~go_left]))
    return out


def predict_margin_batch(model: Model, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    _check_width(model, X.shape[1])
    margins = np.full(X.shape[0], model.base_margin, dtype=np.float64)
    for t in model.trees:
        margins += model.learning_rate * tree_leaf_values(t, X)
    return margins


def predict_proba_batch(model: Model, X: np.ndarray) -> np.ndarray:
    return sigmoid_vec(predict_margin_batch(model, X))


def _node_to_doc(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"weight": node.weight}
    return {
        "feature": node.feature,
        "cut": node.cut,
        "left": _node_to_doc(node.left),
        "right": _node_to_doc(node.right),
    }


def _node_from_doc(doc: dict) -> TreeNode:
    if not isinstance(doc, dict):
        raise ValueError(f"malformed tree node: {doc!r}")
    if "weight" in doc:
        return TreeNode(weight=float(doc["weight"]))
    try:
        return TreeNode(
            feature=int(doc["feature"]),
            cut=float(doc["cut"]),
            left=_node_from_doc(doc["left"]),
            right=_node_from_doc(doc["right"]),
        )
    except KeyError as exc:
        raise ValueError(f"malformed tree node, missing {exc}") from exc


def serialize_model(model: Model) -> str:
    """JSON document; float repr round-trips bit-exact."""
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "base_margin": model.base_margin,
        "learning_rate": model.learning_rate,
        "bin_layouts_ref": model.bin_layouts_ref,
        "trees": [_node_to_doc(t) for t in model.trees],
    }
    return json.dumps(doc)


def deserialize_model(text: str) -> Model:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed model document: {exc}") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise ValueError("malformed model document: missing version")
    if doc["version"] != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc['version']}")
    return Model(
        base_margin=float(doc["base_margin"]),
        learning_rate=float(doc["learning_rate"]),
        bin_layouts_ref=str(doc.get("bin_layouts_ref", "")),
        trees=[_node_from_doc(t) for t in doc["trees"]],
    )
