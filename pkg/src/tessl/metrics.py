"""Censored-data metrics: time-dependent concordance, Kaplan-Meier, IPCW Brier score and IBS."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .survival import TimeGrid


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function that starts at ``initial`` left of the first knot."""

    knots: np.ndarray
    values: np.ndarray
    initial: float = 1.0

    def __call__(self, t) -> np.ndarray:
        idx = np.searchsorted(self.knots, np.asarray(t, dtype=np.float64), side="right") - 1
        return np.where(idx < 0, self.initial, self.values[np.maximum(idx, 0)])

    def left_limit(self, t) -> np.ndarray:
        """Value just before ``t``, i.e. excluding a jump located at ``t``."""
        idx = np.searchsorted(self.knots, np.asarray(t, dtype=np.float64), side="left") - 1
        return np.where(idx < 0, self.initial, self.values[np.maximum(idx, 0)])


def kaplan_meier(times, indicator) -> StepFunction:
    """Product-limit estimate; ``indicator`` marks which times are "events".

    For censoring weights pass ``1 - event``.
    """
    t = np.asarray(times, dtype=np.float64)
    d = np.asarray(indicator, dtype=np.float64)
    if t.size == 0:
        raise ValueError("kaplan_meier needs at least one observation")
    knots, inverse = np.unique(t, return_inverse=True)
    deaths = np.bincount(inverse, weights=d, minlength=knots.size)
    leaving = np.bincount(inverse, minlength=knots.size)
    at_risk = t.size - np.concatenate([[0], np.cumsum(leaving)[:-1]])
    values = np.cumprod(1.0 - deaths / at_risk)
    return StepFunction(knots, values)


@dataclass(frozen=True)
class EvalSet:
    """Predicted survival on a grid together with the observed outcomes.

    ``surv[i, k]`` is the predicted survival of subject i throughout bin k.
    """

    surv: np.ndarray
    grid: TimeGrid
    times: np.ndarray
    events: np.ndarray

    def __post_init__(self):
        surv = np.asarray(self.surv, dtype=np.float64)
        times = np.asarray(self.times, dtype=np.float64)
        events = np.asarray(self.events, dtype=np.int64)
        if surv.ndim != 2 or surv.shape[1] != self.grid.n_bins:
            raise ValueError(f"surv must be (n, {self.grid.n_bins}), got {surv.shape}")
        if times.shape != (surv.shape[0],) or events.shape != times.shape:
            raise ValueError("times and events must have one entry per row of surv")
        object.__setattr__(self, "surv", surv)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)

    def survival_at(self, t) -> np.ndarray:
        """S(t | x_i) for every subject; 1 before the grid, last bin after it."""
        t = float(t)
        if t < self.grid.edges[0]:
            return np.ones(self.surv.shape[0])
        return self.surv[:, int(self.grid.bin_index(t))]


def concordance_td(ev: EvalSet) -> float:
    """Time-dependent concordance over event-anchored pairs, ties in prediction scored 0.5."""
    T, E = ev.times, ev.events
    concordant = 0.0
    comparable = 0
    for i in np.flatnonzero(E == 1):
        later = T > T[i]
        n_later = int(later.sum())
        if n_later == 0:
            continue
        s = ev.survival_at(T[i])
        own, others = s[i], s[later]
        concordant += float((own < others).sum()) + 0.5 * float((own == others).sum())
        comparable += n_later
    if comparable == 0:
        raise ValueError("concordance is undefined: no comparable pairs")
    return concordant / comparable


def brier_score(ev: EvalSet, t: float, censor_km: StepFunction | None = None) -> float:
    """IPCW Brier score at time ``t``.

    Samples whose censoring weight would be 1/0 are dropped from their term.
    """
    if censor_km is None:
        censor_km = kaplan_meier(ev.times, 1 - ev.events)
    T, E = ev.times, ev.events
    s = ev.survival_at(t)
    died = (T <= t) & (E == 1)
    alive = T > t
    g_event = censor_km.left_limit(T)
    g_t = float(censor_km(t))
    total = 0.0
    ok = died & (g_event > 0)
    total += float((s[ok] ** 2 / g_event[ok]).sum())
    if g_t > 0:
        total += float(((1.0 - s[alive]) ** 2).sum()) / g_t
    return total / T.size


def default_ibs_range(times, events) -> tuple[float, float]:
    """First observed event time to the 95th percentile of observed times."""
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events)
    if not np.any(events == 1):
        raise ValueError("no events observed; cannot pick an IBS range")
    return float(times[events == 1].min()), float(np.quantile(times, 0.95))


def integrated_brier(ev: EvalSet, t_min: float | None = None, t_max: float | None = None, n_points: int = 100) -> float:
    """Trapezoidal average of the Brier score over ``n_points`` equidistant times."""
    if t_min is None or t_max is None:
        lo, hi = default_ibs_range(ev.times, ev.events)
        t_min = lo if t_min is None else t_min
        t_max = hi if t_max is None else t_max
    if not t_min < t_max:
        raise ValueError(f"invalid IBS range [{t_min}, {t_max}]")
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    censor_km = kaplan_meier(ev.times, 1 - ev.events)
    ts = np.linspace(t_min, t_max, n_points)
    scores = np.array([brier_score(ev, t, censor_km) for t in ts])
    return float(np.trapezoid(scores, ts) / (t_max - t_min))
