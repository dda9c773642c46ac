"""
Edge-score matrices and rank-based AUC evaluation against a ground-truth graph.
"""

import csv
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.stats import rankdata

from errors import ContractError, DataError, UndefinedMetricError


class ScoreMatrix:
    """Per-pair real edge scores; the diagonal is never evaluated."""

    def __init__(self, values, directed=False, metadata: Optional[Dict] = None):
        values = np.array(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ContractError(f"score matrix must be square, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ContractError("score matrix has non-finite entries")
        np.fill_diagonal(values, 0.0)
        self.values = values
        self.directed = bool(directed)
        self.metadata = dict(metadata or {})

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def symmetrized(self) -> "ScoreMatrix":
        """Average (i,j) with (j,i) and drop the direction flag."""
        return ScoreMatrix(0.5 * (self.values + self.values.T), directed=False, metadata=self.metadata)

    def negated(self) -> "ScoreMatrix":
        return ScoreMatrix(-self.values, directed=self.directed, metadata=self.metadata)

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            for row in self.values:
                writer.writerow([format(float(v), ".17g") for v in row])

    @classmethod
    def from_csv(cls, path, directed=False) -> "ScoreMatrix":
        path = Path(path)
        if not path.exists():
            raise DataError(f"score file not found: {path}")
        try:
            with open(path, newline="") as f:
                rows = [[float(v) for v in row] for row in csv.reader(f) if row]
            return cls(np.array(rows), directed=directed)
        except (ValueError, ContractError) as exc:
            raise DataError(f"malformed score file {path}: {exc}") from exc


def pair_index(n: int, directed: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluated pairs: upper triangle for undirected graphs, all ordered off-diagonal pairs otherwise."""
    if directed:
        rows, cols = np.nonzero(~np.eye(n, dtype=bool))
        return rows, cols
    return np.triu_indices(n, k=1)


def _labels_and_scores(scores: ScoreMatrix, truth) -> Tuple[np.ndarray, np.ndarray]:
    adjacency = np.asarray(truth.adjacency)
    if adjacency.shape != scores.values.shape:
        raise ContractError(f"score matrix {scores.values.shape} does not match graph {adjacency.shape}")
    if scores.directed != truth.directed:
        raise ContractError("score matrix and ground truth disagree on directedness")
    rows, cols = pair_index(scores.n, truth.directed)
    return adjacency[rows, cols] > 0, scores.values[rows, cols]


def _mann_whitney_u(labels: np.ndarray, values: np.ndarray) -> Tuple[float, int, int]:
    positives = int(np.sum(labels))
    negatives = int(labels.size - positives)
    if positives == 0 or negatives == 0:
        raise UndefinedMetricError("AUC is undefined when ground truth has a single class")
    ranks = rankdata(values, method="average")
    u = float(np.sum(ranks[labels])) - positives * (positives + 1) / 2.0
    return u, positives, negatives


def auc(scores: ScoreMatrix, truth) -> float:
    """Mann-Whitney AUC of ``scores`` against ``truth`` as a percentage."""
    labels, values = _labels_and_scores(scores, truth)
    u, p, q = _mann_whitney_u(labels, values)
    return 100.0 * u / (p * q)


def auc_ambiguous(scores: ScoreMatrix, truth) -> float:
    """AUC with the graph/complement ambiguity resolved as ``max(auc, 100 - auc)``."""
    labels, values = _labels_and_scores(scores, truth)
    u, p, q = _mann_whitney_u(labels, values)
    return 100.0 * max(u, p * q - u) / (p * q)


def class_statistics(scores: ScoreMatrix, truth) -> Dict[str, float]:
    """Mean and standard deviation of the scores of true edges and of non-edges."""
    labels, values = _labels_and_scores(scores, truth)
    pos, neg = values[labels], values[~labels]
    return {
        "positive_mean": float(np.mean(pos)) if pos.size else float("nan"),
        "positive_std": float(np.std(pos)) if pos.size else float("nan"),
        "negative_mean": float(np.mean(neg)) if neg.size else float("nan"),
        "negative_std": float(np.std(neg)) if neg.size else float("nan"),
    }


def align_to(scores: ScoreMatrix, truth) -> ScoreMatrix:
    """Match the directedness of ``truth``: symmetrize directed scores, or reinterpret symmetric ones."""
    if truth.directed and not scores.directed:
        return ScoreMatrix(scores.values, directed=True, metadata=scores.metadata)
    if not truth.directed and scores.directed:
        return scores.symmetrized()
    return scores
