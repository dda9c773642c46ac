"""
Baselines for relational inference: histogram mutual information, one-lag
transfer entropy, and the single-step (adjacency branch only) surrogate.
"""

from dataclasses import dataclass, replace
from typing import List

import numpy as np
from scipy.stats import rankdata

from errors import ContractError
from evaluation import ScoreMatrix
from log_utils import get_logger
from model import TrainConfig, TrainedModel, train

logger = get_logger("baselines")

MI_DEFAULT_BINS = 16
TE_BIN_CHOICES = (2, 200)


@dataclass
class BinningConfig:
    bins: int = MI_DEFAULT_BINS
    quantile: bool = False

    def validate(self):
        if self.bins < 2:
            raise ContractError(f"bin count must be >= 2, got {self.bins}")
        return self


def discretize(values: np.ndarray, cfg: BinningConfig) -> np.ndarray:
    """Bin codes in ``[0, bins)`` for a 1-D sample; a constant sample maps to bin 0."""
    values = np.asarray(values, dtype=np.float64)
    bins = cfg.bins
    if cfg.quantile:
        ranks = rankdata(values, method="average")
        return np.minimum(bins - 1, np.floor((ranks - 0.5) / values.size * bins)).astype(np.int64)
    lo, hi = values.min(), values.max()
    if hi <= lo:
        return np.zeros(values.size, dtype=np.int64)
    return np.clip(np.floor((values - lo) / (hi - lo) * bins), 0, bins - 1).astype(np.int64)


def _entropy(*codes: np.ndarray, base: int) -> float:
    joint = np.zeros(codes[0].size, dtype=np.int64)
    for c in codes:
        joint = joint * base + c
    _, counts = np.unique(joint, return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def _dynamic_series(dataset) -> List[np.ndarray]:
    keep = dataset.dims - dataset.static_dims
    return [s[:, :, :keep] for s in dataset.all_series()]


def mi_scores(dataset, bins=None, quantile=False) -> ScoreMatrix:
    """Pairwise mutual information (nats) over train and validation snapshots, averaged over state dimensions."""
    cfg = BinningConfig(bins or MI_DEFAULT_BINS, quantile).validate()
    series = _dynamic_series(dataset)
    samples = np.concatenate([s.reshape(-1, s.shape[1], s.shape[2]) for s in series], axis=0)
    n, dims = samples.shape[1], samples.shape[2]
    scores = np.zeros((n, n))
    for k in range(dims):
        codes = [discretize(samples[:, i, k], cfg) for i in range(n)]
        h = [_entropy(c, base=cfg.bins) for c in codes]
        for i in range(n):
            for j in range(i + 1, n):
                mi = h[i] + h[j] - _entropy(codes[i], codes[j], base=cfg.bins)
                scores[i, j] += mi
                scores[j, i] += mi
    scores /= dims
    meta = {"method": "mi", "bins": cfg.bins, "bins_defaulted": bins is None,
            "quantile": cfg.quantile, "units": "nats"}
    return ScoreMatrix(scores, directed=False, metadata=meta)


def te_scores(dataset, bins=2, quantile=False) -> ScoreMatrix:
    """One-lag transfer entropy; entry (j, i) scores the influence i -> j."""
    cfg = BinningConfig(bins, quantile).validate()
    series = _dynamic_series(dataset)
    if any(s.shape[0] < 2 for s in series):
        raise ContractError("transfer entropy needs trajectories with at least two snapshots")
    stacked = np.concatenate(series, axis=0)
    n, dims = stacked.shape[1], stacked.shape[2]
    scores = np.zeros((n, n))
    bounds = np.cumsum([s.shape[0] for s in series])[:-1]

    for k in range(dims):
        coded = np.stack([discretize(stacked[:, i, k], cfg) for i in range(n)], axis=1)
        chunks = np.split(coded, bounds, axis=0)
        past = np.concatenate([c[:-1] for c in chunks], axis=0)
        now = np.concatenate([c[1:] for c in chunks], axis=0)
        for j in range(n):
            h_yy = _entropy(now[:, j], past[:, j], base=cfg.bins)
            h_y = _entropy(past[:, j], base=cfg.bins)
            for i in range(n):
                if i == j:
                    continue
                te = (h_yy - h_y
                      - _entropy(now[:, j], past[:, j], past[:, i], base=cfg.bins)
                      + _entropy(past[:, j], past[:, i], base=cfg.bins))
                scores[j, i] += max(te, 0.0)
    scores /= dims
    meta = {"method": "te", "bins": cfg.bins, "quantile": cfg.quantile, "units": "nats"}
    return ScoreMatrix(scores, directed=True, metadata=meta)


def single_step_baseline(dataset, cfg: TrainConfig = None, seed=0, progress=None) -> TrainedModel:
    """The GDP learner with the polynomial branch removed."""
    cfg = replace(cfg or TrainConfig(), branches=("adjacency",))
    logger.debug(f"single-step baseline, seed {seed}, rounds {cfg.rounds}")
    return train(dataset, cfg, seed=seed, progress=progress)
