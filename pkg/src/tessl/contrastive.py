"""Contrastive objectives over a multi-view batch.

Three losses share one implementation: the plain two-view objective (positives
are the augmented partner only), the label-supervised objective (positives are
all other views with the same label) and the time-and-event objective, which
additionally reweights every anchor/candidate pair by a linear function of
their time-to-event gap.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import Tensor, log_sum_exp_rows, matmul, mul, sum_, transpose

UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class ContrastiveConfig:
    tau: float = 0.07
    alpha: float = 1.0
    beta: float = 0.9
    reduction: str = "mean_over_anchors"  # or "sum"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"alpha and beta must be > 0, got alpha={self.alpha}, beta={self.beta}")
        if self.alpha < self.beta:
            raise ValueError(f"alpha must be >= beta, got alpha={self.alpha}, beta={self.beta}")
        if self.reduction not in ("sum", "mean_over_anchors"):
            raise ValueError(f"reduction must be 'sum' or 'mean_over_anchors', got {self.reduction!r}")


@dataclass
class MultiViewBatch:
    """2N projected views plus the bookkeeping the losses need.

    ``origin[i]`` is the source sample of view ``i`` (0-based), ``pair[i]`` the
    index of its augmented partner. ``labels`` and ``times`` are per view and
    may be omitted for the plain objective.
    """

    z: Tensor
    origin: np.ndarray
    pair: np.ndarray
    labels: Optional[np.ndarray] = None
    times: Optional[np.ndarray] = None

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.int64)
        self.pair = np.asarray(self.pair, dtype=np.int64)
        n_views = self.z.shape[0]
        if n_views < 2:
            raise ValueError("a multi-view batch needs at least 2 views")
        if self.origin.shape != (n_views,) or self.pair.shape != (n_views,):
            raise ValueError(f"origin/pair must have length {n_views}")
        idx = np.arange(n_views)
        if np.any(self.pair < 0) or np.any(self.pair >= n_views):
            raise ValueError("pair indices out of range")
        if np.any(self.pair[self.pair] != idx) or np.any(self.pair == idx):
            raise ValueError("pair map must be an involution without fixed points")
        if np.any(self.origin[self.pair] != self.origin):
            raise ValueError("paired views must share an origin")
        norms = np.linalg.norm(self.z.data, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise ValueError("embedding rows must have unit norm")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (n_views,):
                raise ValueError(f"labels must have length {n_views}")
            if not _shared_per_origin(self.origin, self.labels):
                raise ValueError("views of the same origin must share a label")
        if self.times is not None:
            self.times = np.asarray(self.times, dtype=np.float64)
            if self.times.shape != (n_views,):
                raise ValueError(f"times must have length {n_views}")
            if not _shared_per_origin(self.origin, self.times):
                raise ValueError("views of the same origin must share a time")

    @property
    def n_views(self) -> int:
        return self.z.shape[0]


def _shared_per_origin(origin: np.ndarray, values: np.ndarray) -> bool:
    for o in np.unique(origin):
        v = values[origin == o]
        if np.any(v != v[0]):
            return False
    return True


def compute_weight_matrix(times, alpha: float, beta: float) -> np.ndarray:
    """Pairwise weights, linear in the absolute time gap.

    The smallest gap among distinct-index pairs maps to ``alpha`` and the largest
    to ``beta``. If every gap is equal the weights are all ``alpha``. The
    diagonal is filled with ``alpha`` and is never read by the losses.
    """
    t = np.asarray(times, dtype=np.float64).ravel()
    if t.size < 2:
        raise ValueError("need at least 2 views to compute pair weights")
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must be > 0")
    gap = np.abs(t[:, None] - t[None, :])
    off = ~np.eye(t.size, dtype=bool)
    s = gap[off].min()
    l = gap[off].max()
    if s == l:
        return np.full(gap.shape, float(alpha))
    w = alpha + (alpha - beta) * (gap - s) / (s - l)
    np.fill_diagonal(w, alpha)
    return w


def _positive_weights(batch: MultiViewBatch, labels: Optional[np.ndarray]) -> np.ndarray:
    """Row-normalized positive indicator: entry (i, p) = 1/|P(i)| for p in P(i)."""
    n = batch.n_views
    if labels is None:
        pos = np.zeros((n, n))
        pos[np.arange(n), batch.pair] = 1.0
    else:
        pos = (labels[:, None] == labels[None, :]).astype(np.float64)
        np.fill_diagonal(pos, 0.0)
    return pos / pos.sum(axis=1, keepdims=True)


def _contrastive(batch: MultiViewBatch, config: ContrastiveConfig, labels, log_weights) -> Tensor:
    n = batch.n_views
    z = batch.z
    logits = mul(matmul(z, transpose(z)), 1.0 / config.tau)
    if log_weights is not None:
        logits = logits + Tensor(log_weights)
    others = ~np.eye(n, dtype=bool)
    log_denom = log_sum_exp_rows(logits, mask=others)
    log_prob = logits - log_denom
    total = -sum_(mul(log_prob, Tensor(_positive_weights(batch, labels))))
    if config.reduction == "mean_over_anchors":
        total = total / n
    return total


def ssl_loss(batch: MultiViewBatch, config: ContrastiveConfig = ContrastiveConfig()) -> Tensor:
    """Two-view objective: each anchor's only positive is its augmented partner."""
    return _contrastive(batch, config, None, None)


def essl_loss(batch: MultiViewBatch, config: ContrastiveConfig = ContrastiveConfig()) -> Tensor:
    """Label-supervised objective; positives share the anchor's label."""
    if batch.labels is None:
        raise ValueError("essl_loss requires per-view labels")
    return _contrastive(batch, config, batch.labels, None)


def tessl_loss(batch: MultiViewBatch, config: ContrastiveConfig = ContrastiveConfig()) -> Tensor:
    """Label-supervised objective with time-gap weights on every pair.

    Weights enter both the positive numerator and the full denominator and are
    treated as constants.
    """
    if batch.labels is None:
        raise ValueError("tessl_loss requires per-view labels")
    if batch.times is None:
        raise ValueError("tessl_loss requires per-view times")
    w = compute_weight_matrix(batch.times, config.alpha, config.beta)
    return _contrastive(batch, config, batch.labels, np.log(w))


LOSSES = {"ssl": ssl_loss, "essl": essl_loss, "tessl": tessl_loss}
