"""Synthetic survival cohorts, CSV I/O, vector augmentations and multi-view batches."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.70, 0.15, 0.15)
# per-month event hazard of the earliest and latest latent stage
MIN_HAZARD = 0.005
MAX_HAZARD = 0.2


@dataclass(frozen=True)
class Sample:
    id: str
    features: np.ndarray
    time: float
    event: int


@dataclass(frozen=True)
class Dataset:
    """Column-oriented cohort; one row per subject.

    ``split`` holds "train"/"val"/"test" per row and is derived from the ids, so
    two datasets with the same ids always split the same way.
    """

    ids: tuple[str, ...]
    features: np.ndarray
    times: np.ndarray
    events: np.ndarray
    split: np.ndarray = field(default=None)

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        X = np.asarray(self.features, dtype=np.float64)
        T = np.asarray(self.times, dtype=np.float64)
        E = np.asarray(self.events, dtype=np.int64)
        n = len(ids)
        if X.ndim != 2 or X.shape[0] != n or T.shape != (n,) or E.shape != (n,):
            raise ValueError("ids, features, times and events must agree in length")
        if len(set(ids)) != n:
            raise ValueError("sample ids must be unique")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(T)):
            raise ValueError("features and times must be finite")
        if np.any(T < 0):
            raise ValueError("times must be >= 0")
        if np.any((E != 0) & (E != 1)):
            raise ValueError("events must be 0 or 1")
        split = assign_splits(ids) if self.split is None else np.asarray(self.split, dtype=object)
        for name, value in (("ids", ids), ("features", X), ("times", T), ("events", E), ("split", split)):
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            object.__setattr__(self, name, value)

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.ids[i], self.features[i], float(self.times[i]), int(self.events[i]))

    def __iter__(self) -> Iterator[Sample]:
        return (self[i] for i in range(len(self)))

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, mask) -> "Dataset":
        idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
        return Dataset(tuple(self.ids[i] for i in idx), self.features[idx], self.times[idx], self.events[idx], self.split[idx])

    def get_split(self, name: str) -> "Dataset":
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return self.subset(self.split == name)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.ids == other.ids
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.events, other.events)
            and np.array_equal(self.split, other.split)
        )


def assign_splits(ids, seed: int = 0) -> np.ndarray:
    """70/15/15 subject-level split from a seeded shuffle of the sorted ids."""
    order = sorted(set(ids))
    perm = np.random.default_rng(seed).permutation(len(order))
    n_train = int(round(SPLIT_FRACTIONS[0] * len(order)))
    n_val = int(round(SPLIT_FRACTIONS[1] * len(order)))
    which = {}
    for rank, j in enumerate(perm):
        which[order[j]] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return np.array([which[i] for i in ids], dtype=object)


def generate_synthetic(n_subjects: int = 600, n_features: int = 32, n_stages: int = 5,
                       censor_rate: float = 0.25, seed: int = 0, return_stages: bool = False):
    """Latent-stage cohort with stage-dependent features and monthly hazards.

    Each subject draws a stage; its features are the stage's mean vector plus
    unit Gaussian noise, and its event month is geometric with a per-month hazard
    that grows with stage. Follow-up ends at a uniform integer month drawn
    independently of everything else; subjects still event-free then are
    censored at that month. The follow-up range is chosen so the expected
    censored fraction equals ``censor_rate``.

    With ``return_stages`` the latent stage per subject is returned as well.
    """
    if n_subjects < 10:
        raise ValueError("n_subjects must be >= 10")
    if n_features < 2:
        raise ValueError("n_features must be >= 2")
    if n_stages < 1:
        raise ValueError("n_stages must be >= 1")
    if not 0 <= censor_rate < 1:
        raise ValueError("censor_rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    stage = rng.integers(0, n_stages, size=n_subjects)
    # stage means lie along one random direction so stages are ordered in feature space
    direction = rng.standard_normal(n_features)
    direction /= np.linalg.norm(direction)
    offsets = rng.standard_normal((n_stages, n_features)) * 0.5
    severity = np.linspace(-1.0, 1.0, n_stages) if n_stages > 1 else np.zeros(1)
    means = 2.0 * severity[:, None] * direction[None, :] + offsets
    X = means[stage] + rng.standard_normal((n_subjects, n_features))
    hazard = np.geomspace(MIN_HAZARD, MAX_HAZARD, n_stages)
    T = rng.geometric(hazard[stage]).astype(np.float64)
    window = follow_up_window(hazard, censor_rate)
    if window is None:
        E = np.ones(n_subjects, dtype=np.int64)
    else:
        follow_up = rng.integers(0, window + 1, size=n_subjects).astype(np.float64)
        E = (T <= follow_up).astype(np.int64)
        T = np.minimum(T, follow_up)
    width = len(str(n_subjects - 1))
    ids = tuple(f"S{i:0{width}d}" for i in range(n_subjects))
    ds = Dataset(ids, X, T, E)
    return (ds, stage) if return_stages else ds


def censored_fraction(hazard: np.ndarray, window: int) -> float:
    """P(T > C) for geometric T (equally likely hazards) and C uniform on 0..window."""
    q = 1.0 - np.asarray(hazard, dtype=np.float64)
    m = window + 1
    return float(np.mean((1.0 - q ** m) / (m * (1.0 - q))))


def follow_up_window(hazard: np.ndarray, censor_rate: float) -> int | None:
    """Smallest follow-up range whose censored fraction is at most ``censor_rate``.

    ``None`` means no censoring at all.
    """
    if censor_rate <= 0:
        return None
    lo, hi = 0, 1
    while censored_fraction(hazard, hi) > censor_rate:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if censored_fraction(hazard, mid) > censor_rate:
            lo = mid
        else:
            hi = mid
    return hi


@dataclass(frozen=True)
class AugmentConfig:
    noise_sigma: float = 0.1
    mask_prob: float = 0.2

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0 <= self.mask_prob < 1:
            raise ValueError(f"mask_prob must lie in [0, 1), got {self.mask_prob}")


def augment(features, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Gaussian jitter followed by independent coordinate dropout.

    Works on a single vector or a stack of rows.
    """
    x = np.asarray(features, dtype=np.float64)
    noise = rng.standard_normal(x.shape) * config.noise_sigma
    keep = rng.random(x.shape) >= config.mask_prob
    return (x + noise) * keep


@dataclass(frozen=True)
class MultiViewInputs:
    """2N augmented feature rows; view i and view i + N come from sample i."""

    features: np.ndarray
    origin: np.ndarray
    pair: np.ndarray
    labels: np.ndarray
    times: np.ndarray
    ids: tuple[str, ...]


def build_multiview_batch(samples: Dataset, config: AugmentConfig, rng: np.random.Generator,
                          labels: str = "event") -> MultiViewInputs:
    """Two augmented views per sample.

    ``labels`` picks the per-view class: ``"event"`` uses the event indicator,
    ``"subject"`` gives every sample its own class.
    """
    n = len(samples)
    if n < 2:
        raise ValueError("a multi-view batch needs at least 2 samples")
    X = samples.features
    views = np.concatenate([augment(X, config, rng), augment(X, config, rng)])
    origin = np.tile(np.arange(n), 2)
    pair = np.concatenate([np.arange(n, 2 * n), np.arange(n)])
    if labels == "event":
        lab = np.tile(samples.events, 2)
    elif labels == "subject":
        lab = origin.copy()
    else:
        raise ValueError(f"labels must be 'event' or 'subject', got {labels!r}")
    return MultiViewInputs(views, origin, pair, lab, np.tile(samples.times, 2), samples.ids)


# ----------------------------------------------------------------------- CSV


def save_csv(dataset: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "time", "event"] + [f"f{j}" for j in range(dataset.n_features)])
        for i in range(len(dataset)):
            w.writerow(
                [dataset.ids[i], f"{dataset.times[i]:.17g}", int(dataset.events[i])]
                + [f"{v:.17g}" for v in dataset.features[i]]
            )


def load_csv(path) -> Dataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: line 1: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 4 or header[:3] != ["id", "time", "event"]:
        raise ValueError(f"{path}: line 1: header must start with id,time,event and have at least one feature column")
    expected = [f"f{j}" for j in range(len(header) - 3)]
    if header[3:] != expected:
        raise ValueError(f"{path}: line 1: feature columns must be named {','.join(expected)}")
    ids, times, events, feats = [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            t = float(row[1])
            f = [float(v) for v in row[3:]]
        except ValueError as err:
            raise ValueError(f"{path}: line {lineno}: {err}") from None
        if row[2].strip() not in ("0", "1"):
            raise ValueError(f"{path}: line {lineno}: event must be 0 or 1, got {row[2]!r}")
        ids.append(row[0])
        times.append(t)
        events.append(int(row[2]))
        feats.append(f)
    if not ids:
        raise ValueError(f"{path}: no data rows")
    try:
        return Dataset(tuple(ids), np.array(feats), np.array(times), np.array(events))
    except ValueError as err:
        raise ValueError(f"{path}: {err}") from None
