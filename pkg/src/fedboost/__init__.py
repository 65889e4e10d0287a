"""Horizontal federated gradient boosting with k-anonymous histogram
aggregation, built for extremely unbalanced binary anomaly detection."""

from .binning import BinLayout, BinLayoutSet, assign_bin, audit_anonymity, build_layout
from .data import Dataset, SplitIndices, load_csv, partition, shard
from .loss import GradPair, grad_pair, loss_value, sigmoid
from .metrics import ConfusionMatrix, confusion, f1, pr_auc, roc_auc
from .splits import Regularization, SplitDecision, best_split, leaf_weight
from .trainer import FederatedSession, TrainConfig, TrainReport, wrongly_classified
from .tree import Model, TreeNode, deserialize_model, predict_class, predict_margin, serialize_model

__all__ = [
    "BinLayout",
    "BinLayoutSet",
    "ConfusionMatrix",
    "Dataset",
    "FederatedSession",
    "GradPair",
    "Model",
    "Regularization",
    "SplitDecision",
    "SplitIndices",
    "TrainConfig",
    "TrainReport",
    "TreeNode",
    "assign_bin",
    "audit_anonymity",
    "best_split",
    "build_layout",
    "confusion",
    "deserialize_model",
    "f1",
    "grad_pair",
    "leaf_weight",
    "load_csv",
    "loss_value",
    "partition",
    "pr_auc",
    "predict_class",
    "predict_margin",
    "roc_auc",
    "serialize_model",
    "shard",
    "sigmoid",
    "wrongly_classified",
]

__version__ = "0.1.0"
