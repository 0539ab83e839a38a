"""Discrete-time survival head: time grid, hazard PMF, CIF and the two losses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, exp, log, matmul, mlp_forward, mul, softmax_rows, sum_, transpose

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    edges: np.ndarray
    scheme: str = "quantile"

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 3:
            raise ValueError("a time grid needs at least 2 bins (3 edges)")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("grid edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)

    @property
    def n_bins(self) -> int:
        return self.edges.size - 1

    def bin_index(self, times) -> np.ndarray:
        """Bin k with edges[k] <= t < edges[k+1]; the last bin is right-closed.

        Times outside the grid are clipped to the first/last bin.
        """
        t = np.asarray(times, dtype=np.float64)
        k = np.searchsorted(self.edges, t, side="right") - 1
        return np.clip(k, 0, self.n_bins - 1)


def discretize(times, n_bins: int = 10, scheme: str = "quantile") -> tuple[TimeGrid, np.ndarray]:
    t = np.asarray(times, dtype=np.float64).ravel()
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    if t.size == 0:
        raise ValueError("cannot discretize an empty set of times")
    if scheme == "equidistant":
        if t.min() == t.max():
            raise ValueError("equidistant grid needs at least two distinct times")
        edges = np.linspace(t.min(), t.max(), n_bins + 1)
    elif scheme == "quantile":
        distinct = np.unique(t)
        if distinct.size < 2:
            raise ValueError("quantile grid needs at least two distinct times")
        if distinct.size < n_bins:
            raise ValueError(f"quantile grid with {n_bins} bins needs at least {n_bins} distinct times, got {distinct.size}")
        q = np.linspace(0.0, 1.0, n_bins + 1)
        edges = np.quantile(t, q)
        if np.any(np.diff(edges) <= 0):
            # heavy ties: fall back to quantiles of the distinct values
            edges = np.quantile(distinct, q)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    grid = TimeGrid(edges, scheme)
    return grid, grid.bin_index(t)


def pmf_forward(head: list[tuple[Tensor, Tensor]], r, n_bins: int | None = None) -> Tensor:
    """Softmax over the head's output logits, one row per sample."""
    logits = mlp_forward(head, r)
    if n_bins is not None and logits.shape[1] != n_bins:
        raise ValueError(f"head produces {logits.shape[1]} outputs but the grid has {n_bins} bins")
    return softmax_rows(logits)


def _cumsum_matrix(k: int) -> np.ndarray:
    return np.triu(np.ones((k, k)))


def cif(pmf: Tensor) -> Tensor:
    """Cumulative incidence: running sum of the PMF along each row."""
    return matmul(pmf, Tensor(_cumsum_matrix(pmf.shape[1])))


def survival_from_pmf(pmf) -> np.ndarray:
    h = pmf.data if isinstance(pmf, Tensor) else np.asarray(pmf, dtype=np.float64)
    return 1.0 - np.cumsum(h, axis=1)


def _onehot(bins, k: int) -> np.ndarray:
    bins = np.asarray(bins, dtype=np.int64)
    out = np.zeros((bins.size, k))
    out[np.arange(bins.size), bins] = 1.0
    return out


def deephit_l1(pmf: Tensor, bins, events, reduction: str = "mean") -> Tensor:
    """Negative log-likelihood of the hitting time.

    Events contribute -log h[k_i]; censored samples contribute -log(1 - F[k_i]).
    Log arguments are clamped at ``LOG_FLOOR``.
    """
    n, k = pmf.shape
    events = np.asarray(events, dtype=np.float64).reshape(n, 1)
    if np.any((events != 0) & (events != 1)):
        raise ValueError("events must be 0 or 1")
    onehot = Tensor(_onehot(bins, k))
    h_at = sum_(mul(pmf, onehot), axis=1)
    F_at = sum_(mul(cif(pmf), onehot), axis=1)
    ll = mul(log(h_at, floor=LOG_FLOOR), events) + mul(log(1.0 - F_at, floor=LOG_FLOOR), 1.0 - events)
    total = -sum_(ll)
    return total / n if reduction == "mean" else total


def comparable_pairs(bins, events) -> np.ndarray:
    """A[i, j] = 1 iff sample i had an event and k_i < k_j."""
    bins = np.asarray(bins)
    events = np.asarray(events)
    return ((events[:, None] == 1) & (bins[:, None] < bins[None, :])).astype(np.float64)


def deephit_l2(pmf: Tensor, bins, events, gamma: float = 0.1, sigma: float = 0.1, reduction: str = "mean") -> Tensor:
    """Ranking loss gamma * sum A_ij exp(-(F_i(k_i) - F_j(k_i)) / sigma)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    n, k = pmf.shape
    A = comparable_pairs(bins, events)
    n_pairs = A.sum()
    if n_pairs == 0:
        return Tensor(0.0)
    onehot = _onehot(bins, k)
    F = cif(pmf)
    own = sum_(mul(F, Tensor(onehot)), axis=1)  # F_i(k_i), (n, 1)
    cross = transpose(matmul(F, Tensor(onehot.T)))  # [i, j] = F_j(k_i)
    eta = exp(mul(own - cross, -1.0 / sigma))
    total = mul(sum_(mul(eta, Tensor(A))), gamma)
    return total / n_pairs if reduction == "mean" else total


def total_loss(pmf: Tensor, bins, events, gamma: float = 0.1, sigma: float = 0.1, reduction: str = "mean") -> Tensor:
    return deephit_l1(pmf, bins, events, reduction) + deephit_l2(pmf, bins, events, gamma, sigma, reduction)
