"""Prediction and graph-recovery metrics plus the per-run report record."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    """Inputs cannot produce a well-defined metric value."""


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i, n = 0, len(values)
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """Probability that a random positive outranks a random negative; ties count 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise MetricError(f"scores {scores.shape} and labels {labels.shape} must be equal-length vectors")
    if not set(np.unique(labels)) <= {0, 1}:
        raise MetricError("labels must be binary 0/1")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("roc_auc needs both classes present")
    ranks = _average_ranks(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def graph_auc(edge_scores: np.ndarray, true_graph: np.ndarray) -> float:
    """roc_auc of off-diagonal edge scores against the true binary support."""
    edge_scores = np.asarray(edge_scores, dtype=np.float64)
    true_graph = np.asarray(true_graph)
    if edge_scores.shape != true_graph.shape or edge_scores.ndim != 2 \
            or edge_scores.shape[0] != edge_scores.shape[1]:
        raise MetricError(f"score matrix {edge_scores.shape} and truth {true_graph.shape} "
                          "must be square and matched")
    off = ~np.eye(edge_scores.shape[0], dtype=bool)
    labels = (true_graph[off] != 0).astype(np.int64)
    if labels.all() or not labels.any():
        raise MetricError("true graph has no negative (or no positive) off-diagonal entries")
    return roc_auc(edge_scores[off], labels)


def mean_graph_auc(edge_scores_per_graph, true_graph_per_graph) -> float:
    """Mean graph_auc across a list of class graphs."""
    aucs = [graph_auc(s, t) for s, t in zip(edge_scores_per_graph, true_graph_per_graph)]
    if not aucs:
        raise MetricError("no graphs to score")
    return float(np.mean(aucs))


def rmse(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise MetricError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise MetricError("rmse of empty input")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def accuracy(y_true, y_pred_labels) -> float:
    y_true = np.asarray(y_true)
    y_pred_labels = np.asarray(y_pred_labels)
    if y_true.shape != y_pred_labels.shape or y_true.size == 0:
        raise MetricError("accuracy needs matched non-empty label vectors")
    return float((y_true == y_pred_labels).mean())


@dataclass
class MetricReport:
    metric: str
    value: float
    split: str
    seed: int

    def to_dict(self) -> dict:
        return {"metric": self.metric, "value": self.value,
                "split": self.split, "seed": self.seed}


def aggregate_reports(reports: list[MetricReport]) -> list[dict]:
    """Group per-seed reports by (metric, split) into mean +/- std summaries.

    The std field is present only when at least two seeds contributed.
    """
    groups: dict[tuple[str, str], list[MetricReport]] = {}
    for r in reports:
        groups.setdefault((r.metric, r.split), []).append(r)
    out = []
    for (metric, split), rs in groups.items():
        values = [r.value for r in rs]
        entry = {
            "metric": metric,
            "split": split,
            "mean": float(np.mean(values)),
            "n_seeds": len(rs),
            "seeds": [r.seed for r in rs],
            "values": values,
        }
        entry["std"] = float(np.std(values)) if len(rs) >= 2 else None
        out.append(entry)
    return out
