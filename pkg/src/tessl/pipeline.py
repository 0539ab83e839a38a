"""Pretrain -> finetune -> evaluate, plus checkpoints, reports and sweeps."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .contrastive import LOSSES, ContrastiveConfig, MultiViewBatch
from .data import AugmentConfig, Dataset, build_multiview_batch, generate_synthetic, load_csv
from .metrics import EvalSet, concordance_td, integrated_brier
from .optim import LARS, Adam, GradAccumulator, is_bias, pretrain_lr
from .survival import TimeGrid, discretize, pmf_forward, survival_from_pmf, total_loss

log = logging.getLogger(__name__)

MODES = ("none", "ssl", "essl", "tessl")
ABLATION_GRID = ((1.0, 0.5), (1.0, 0.7), (1.0, 0.9), (1.1, 1.0), (1.3, 1.0), (1.5, 1.0))


def _opt(help_text: str, **kw):
    return field(metadata={"help": help_text}, **kw)


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = _opt("contrastive pretraining objective: none, ssl, essl or tessl", default="tessl")
    contrastive_labels: str = _opt("class used for positives: event (indicator) or subject (unique per sample)", default="event")
    hidden_dim: int = _opt("width of the encoder's hidden layers", default=64)
    embed_dim: int = _opt("encoder output (representation) dimension", default=256)
    proj_dim: int = _opt("projection head output dimension", default=128)
    tau: float = _opt("contrastive temperature", default=0.07)
    alpha: float = _opt("pair weight for the smallest time gap", default=1.0)
    beta: float = _opt("pair weight for the largest time gap", default=0.9)
    reduction: str = _opt("contrastive reduction: mean_over_anchors or sum", default="mean_over_anchors")
    n_bins: int = _opt("number of discrete time bins", default=10)
    bin_scheme: str = _opt("time grid: quantile or equidistant", default="quantile")
    gamma: float = _opt("ranking loss weight", default=0.1)
    sigma: float = _opt("ranking loss scale", default=0.1)
    batch_size: int = _opt("samples per micro-batch", default=16)
    accum_steps: int = _opt("micro-batches accumulated per pretraining step", default=8)
    pretrain_epochs: int = _opt("pretraining epochs", default=50)
    finetune_epochs: int = _opt("finetuning epochs", default=10)
    lars_lr: float = _opt("pretraining learning rate; 0 means 0.3 * batch_size * accum_steps / 256", default=0.0)
    lars_momentum: float = _opt("LARS momentum", default=0.9)
    lars_weight_decay: float = _opt("LARS weight decay", default=0.0)
    lars_trust_coeff: float = _opt("LARS trust coefficient", default=0.001)
    lars_exclude_bias: bool = _opt("update biases with plain momentum SGD instead of the trust ratio", default=False)
    adam_lr: float = _opt("finetuning Adam learning rate", default=1e-4)
    freeze_encoder: bool = _opt("train only the survival head during finetuning", default=False)
    noise_sigma: float = _opt("augmentation Gaussian noise scale", default=0.1)
    mask_prob: float = _opt("augmentation coordinate dropout probability", default=0.2)
    seeds: tuple = _opt("training seeds, comma separated", default=(0, 1, 2))
    data_path: str = _opt("CSV dataset; empty means generate synthetic data", default="")
    n_subjects: int = _opt("synthetic cohort size", default=600)
    n_features: int = _opt("synthetic feature dimension", default=32)
    n_stages: int = _opt("synthetic latent stages", default=5)
    censor_rate: float = _opt("synthetic censoring probability", default=0.25)
    data_seed: int = _opt("synthetic data seed", default=0)
    ibs_points: int = _opt("time points for the integrated Brier score", default=100)

    def __post_init__(self):
        seeds = self.seeds
        if isinstance(seeds, str):
            seeds = tuple(int(s) for s in seeds.split(",") if s.strip())
        object.__setattr__(self, "seeds", tuple(int(s) for s in seeds))
        self.validate()

    def validate(self) -> None:
        def bad(key, why):
            raise ValueError(f"invalid config key {key!r}: {why}")

        if self.mode not in MODES:
            bad("mode", f"must be one of {MODES}, got {self.mode!r}")
        if self.contrastive_labels not in ("event", "subject"):
            bad("contrastive_labels", "must be 'event' or 'subject'")
        for key in ("hidden_dim", "embed_dim", "proj_dim", "batch_size", "accum_steps", "ibs_points"):
            if getattr(self, key) < 1:
                bad(key, "must be >= 1")
        for key in ("pretrain_epochs", "finetune_epochs"):
            if getattr(self, key) < 0:
                bad(key, "must be >= 0")
        if self.batch_size < 2:
            bad("batch_size", "must be >= 2")
        if self.ibs_points < 2:
            bad("ibs_points", "must be >= 2")
        if not self.tau > 0:
            bad("tau", f"must be > 0, got {self.tau}")
        if not self.beta > 0:
            bad("beta", f"must be > 0, got {self.beta}")
        if not self.alpha >= self.beta:
            bad("alpha", f"must be >= beta ({self.beta}), got {self.alpha}")
        if self.reduction not in ("sum", "mean_over_anchors"):
            bad("reduction", "must be 'sum' or 'mean_over_anchors'")
        if self.n_bins < 2:
            bad("n_bins", "must be >= 2")
        if self.bin_scheme not in ("quantile", "equidistant"):
            bad("bin_scheme", "must be 'quantile' or 'equidistant'")
        if self.gamma < 0:
            bad("gamma", "must be >= 0")
        if not self.sigma > 0:
            bad("sigma", "must be > 0")
        for key in ("lars_lr", "lars_weight_decay", "lars_momentum", "lars_trust_coeff"):
            if getattr(self, key) < 0:
                bad(key, "must be >= 0")
        if not self.adam_lr > 0:
            bad("adam_lr", "must be > 0")
        if self.noise_sigma < 0:
            bad("noise_sigma", "must be >= 0")
        if not 0 <= self.mask_prob < 1:
            bad("mask_prob", "must lie in [0, 1)")
        if not self.seeds:
            bad("seeds", "at least one seed is required")
        if self.n_subjects < 10:
            bad("n_subjects", "must be >= 10")
        if self.n_features < 2:
            bad("n_features", "must be >= 2")
        if self.n_stages < 1:
            bad("n_stages", "must be >= 1")
        if not 0 <= self.censor_rate < 1:
            bad("censor_rate", "must lie in [0, 1)")

    @property
    def effective_batch(self) -> int:
        return self.batch_size * self.accum_steps

    @property
    def pretrain_learning_rate(self) -> float:
        return self.lars_lr if self.lars_lr > 0 else pretrain_lr(self.effective_batch)

    def contrastive(self) -> ContrastiveConfig:
        return ContrastiveConfig(self.tau, self.alpha, self.beta, self.reduction)

    def augmentation(self) -> AugmentConfig:
        return AugmentConfig(self.noise_sigma, self.mask_prob)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        d = dict(d)
        if "seeds" in d and isinstance(d["seeds"], list):
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_dataset(config: ExperimentConfig) -> Dataset:
    if config.data_path:
        return load_csv(config.data_path)
    return generate_synthetic(config.n_subjects, config.n_features, config.n_stages,
                              config.censor_rate, config.data_seed)


# --------------------------------------------------------------- checkpoints

MAGIC = b"SVCL"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """Named parameter arrays plus a JSON-able metadata snapshot.

    Parameter names are prefixed by group: ``encoder.``, ``projector.`` (after
    pretraining) or ``head.`` (after finetuning).
    """

    config: ExperimentConfig
    params: dict[str, np.ndarray]
    seed: int
    step: int = 0
    stage: str = "pretrain"
    train_ids: tuple[str, ...] = ()
    grid_edges: Optional[np.ndarray] = None
    history: list = field(default_factory=list)

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.params.items() if k.startswith(prefix + ".")}

    @property
    def has_head(self) -> bool:
        return any(k.startswith("head.") for k in self.params)

    @property
    def grid(self) -> TimeGrid:
        if self.grid_edges is None:
            raise ValueError("checkpoint has no time grid (not finetuned)")
        return TimeGrid(np.asarray(self.grid_edges))

    def snapshot(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "seed": self.seed,
            "step": self.step,
            "stage": self.stage,
            "train_ids": list(self.train_ids),
            "grid_edges": None if self.grid_edges is None else [float(e) for e in self.grid_edges],
            "history": self.history,
        }


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Write the binary checkpoint atomically (temp file + rename).

    Layout, little-endian: b"SVCL", u32 version, u64 length + UTF-8 JSON
    snapshot, u32 tensor count, then per tensor u32 name length + UTF-8 name,
    u32 rank, rank x u64 dims, float64 payload in row-major order.
    """
    path = Path(path)
    meta = json.dumps(ckpt.snapshot(), sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<Q", len(meta)), meta,
              struct.pack("<I", len(ckpt.params))]
    for name in sorted(ckpt.params):
        arr = np.ascontiguousarray(ckpt.params[name], dtype="<f8")
        raw = name.encode("utf-8")
        chunks += [struct.pack("<I", len(raw)), raw, struct.pack("<I", arr.ndim),
                   struct.pack(f"<{arr.ndim}Q", *arr.shape), arr.tobytes(order="C")]
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(b"".join(chunks))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> Checkpoint:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    pos = 4

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, buf, pos)
        pos += struct.calcsize(fmt)
        return vals

    (version,) = take("<I")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (meta_len,) = take("<Q")
    meta = json.loads(buf[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = take("<I")
    params = {}
    for _ in range(count):
        (name_len,) = take("<I")
        name = buf[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = take("<I")
        dims = take(f"<{rank}Q")
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(dims).astype(np.float64)
        pos += 8 * n
        params[name] = arr
    if pos != len(buf):
        raise ValueError(f"{path}: {len(buf) - pos} trailing bytes")
    config = ExperimentConfig.from_dict(meta["config"])
    ckpt = Checkpoint(config, params, meta["seed"], meta["step"], meta["stage"], tuple(meta["train_ids"]),
                      None if meta["grid_edges"] is None else np.array(meta["grid_edges"]), meta["history"])
    _check_param_shapes(ckpt.params, config, ckpt.grid_edges)
    return ckpt


def _expected_shapes(config: ExperimentConfig, n_features: int, n_bins: Optional[int]) -> dict[str, tuple]:
    shapes = {}
    for prefix, dims in _architecture(config, n_features, n_bins).items():
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            shapes[f"{prefix}.{i}.weight"] = (a, b)
            shapes[f"{prefix}.{i}.bias"] = (1, b)
    return shapes


def _architecture(config: ExperimentConfig, n_features: int, n_bins: Optional[int]) -> dict[str, list[int]]:
    arch = {
        "encoder": [n_features, config.hidden_dim, config.hidden_dim, config.embed_dim],
        "projector": [config.embed_dim, config.embed_dim, config.proj_dim],
    }
    if n_bins is not None:
        arch["head"] = [config.embed_dim, n_bins]
    return arch


def _check_param_shapes(params: dict[str, np.ndarray], config: ExperimentConfig, grid_edges) -> None:
    if "encoder.0.weight" not in params:
        raise ValueError("checkpoint has no encoder parameters")
    n_features = params["encoder.0.weight"].shape[0]
    n_bins = None if grid_edges is None else len(grid_edges) - 1
    expected = _expected_shapes(config, n_features, n_bins)
    for name, arr in params.items():
        if name not in expected:
            raise ValueError(f"unexpected parameter {name!r}")
        if arr.shape != expected[name]:
            raise ValueError(f"parameter {name!r} has shape {arr.shape}, config expects {expected[name]}")


# ------------------------------------------------------------------- model


def _layers(params: dict[str, np.ndarray], prefix: str, trainable: bool = True):
    leaves = {}
    layers = []
    i = 0
    while f"{prefix}.{i}.weight" in params:
        w = ad.Tensor(params[f"{prefix}.{i}.weight"], requires_grad=trainable)
        b = ad.Tensor(params[f"{prefix}.{i}.bias"], requires_grad=trainable)
        leaves[f"{prefix}.{i}.weight"] = w
        leaves[f"{prefix}.{i}.bias"] = b
        layers.append((w, b))
        i += 1
    return layers, leaves


def encode(layers, x) -> ad.Tensor:
    return ad.relu(ad.mlp_forward(layers, x))


def _batches(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled index batches; a trailing batch smaller than 2 is dropped."""
    order = rng.permutation(n)
    out = [order[i:i + size] for i in range(0, n, size)]
    return [b for b in out if b.size >= 2]


def _seeded_rng(seed: int, stream: str) -> np.random.Generator:
    tag = int.from_bytes(hashlib.sha256(stream.encode()).digest()[:4], "little")
    return np.random.default_rng([seed, tag])


def pretrain(config: ExperimentConfig, dataset: Dataset, seed: int = 0) -> Checkpoint:
    """Contrastive pretraining of encoder + projector with LARS and accumulation.

    ``history`` in the returned checkpoint holds the mean loss of every epoch.
    """
    if config.mode == "none":
        raise ValueError("mode 'none' has no pretraining phase")
    train = dataset.get_split("train")
    if len(train) < 2:
        raise ValueError("pretraining needs at least 2 training samples")
    rng = _seeded_rng(seed, "pretrain")
    arch = _architecture(config, dataset.n_features, None)
    params = {}
    for prefix, dims in arch.items():
        params.update(ad.init_mlp(dims, rng, prefix=prefix + "."))
    loss_fn = LOSSES[config.mode]
    ccfg = config.contrastive()
    aug = config.augmentation()
    labels = "subject" if config.mode == "ssl" else config.contrastive_labels
    opt = LARS(config.pretrain_learning_rate, momentum=config.lars_momentum,
               weight_decay=config.lars_weight_decay, trust_coeff=config.lars_trust_coeff,
               exclude=is_bias if config.lars_exclude_bias else None)
    acc = GradAccumulator(config.accum_steps)
    history = []
    steps = 0
    for epoch in range(config.pretrain_epochs):
        losses = []
        for idx in _batches(len(train), config.batch_size, rng):
            views = build_multiview_batch(train.subset(idx), aug, rng, labels=labels)
            enc, enc_leaves = _layers(params, "encoder")
            proj, proj_leaves = _layers(params, "projector")
            z = ad.mlp_forward(proj, encode(enc, views.features), normalize_output=True)
            batch = MultiViewBatch(z, views.origin, views.pair, views.labels, views.times)
            loss = loss_fn(batch, ccfg)
            leaves = {**enc_leaves, **proj_leaves}
            grads = ad.backward(loss, wrt=leaves.values())
            losses.append(loss.item())
            if acc.accumulate_and_maybe_step(opt, params, {k: grads[t] for k, t in leaves.items()}):
                steps += 1
        history.append(float(np.mean(losses)))
        log.debug("pretrain[%s] epoch %d loss %.6f", config.mode, epoch, history[-1])
    if acc.flush(opt, params):
        steps += 1
    return Checkpoint(config, params, seed, steps, "pretrain", train.ids, None, history)


def finetune(config: ExperimentConfig, dataset: Dataset, checkpoint: Optional[Checkpoint] = None,
             seed: int = 0) -> tuple[Checkpoint, "MetricsReport"]:
    """Replace the projector with a survival head and train jointly with Adam.

    Without a checkpoint the encoder starts from random weights. Returns the
    finetuned checkpoint and its report on the validation split.
    """
    train = dataset.get_split("train")
    if len(train) < 2:
        raise ValueError("finetuning needs at least 2 training samples")
    rng = _seeded_rng(seed, "finetune")
    grid, bins = discretize(train.times, config.n_bins, config.bin_scheme)
    params = {}
    if checkpoint is not None:
        enc = checkpoint.group("encoder")
        expected = _expected_shapes(config, dataset.n_features, None)
        for name, arr in enc.items():
            if name not in expected or arr.shape != expected[name]:
                raise ValueError(f"checkpoint parameter {name!r} with shape {arr.shape} does not fit the config")
        if len(enc) != sum(1 for k in expected if k.startswith("encoder.")):
            raise ValueError("checkpoint encoder depth does not match the config")
        params.update({k: v.copy() for k, v in enc.items()})
        init_rng = _seeded_rng(seed, "head")
    else:
        init_rng = _seeded_rng(seed, "head")
        params.update(ad.init_mlp(_architecture(config, dataset.n_features, None)["encoder"], init_rng, "encoder."))
    params.update(ad.init_mlp([config.embed_dim, grid.n_bins], init_rng, "head."))
    opt = Adam(config.adam_lr)
    history = []
    steps = 0
    for epoch in range(config.finetune_epochs):
        losses = []
        for idx in _batches(len(train), config.batch_size, rng):
            enc, enc_leaves = _layers(params, "encoder", trainable=not config.freeze_encoder)
            head, head_leaves = _layers(params, "head")
            pmf = pmf_forward(head, encode(enc, train.features[idx]), grid.n_bins)
            loss = total_loss(pmf, bins[idx], train.events[idx], config.gamma, config.sigma)
            leaves = head_leaves if config.freeze_encoder else {**enc_leaves, **head_leaves}
            grads = ad.backward(loss, wrt=leaves.values())
            opt.step(params, {k: grads[t] for k, t in leaves.items()})
            losses.append(loss.item())
            steps += 1
        history.append(float(np.mean(losses)))
        log.debug("finetune epoch %d loss %.6f", epoch, history[-1])
    ckpt = Checkpoint(config, params, seed, steps, "finetune", train.ids, grid.edges.copy(), history)
    return ckpt, evaluate(ckpt, dataset, "val")


# --------------------------------------------------------------- evaluation


@dataclass
class MetricsReport:
    config_hash: str
    seeds: list[int]
    c_td: list[float]
    ibs: list[float]
    wall_clock_s: float = 0.0

    @property
    def c_td_mean(self) -> float:
        return float(np.mean(self.c_td))

    @property
    def ibs_mean(self) -> float:
        return float(np.mean(self.ibs))

    def to_json(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seeds": list(self.seeds),
            "c_td": {"per_seed": list(self.c_td), "mean": self.c_td_mean},
            "ibs": {"per_seed": list(self.ibs), "mean": self.ibs_mean},
            "wall_clock_s": self.wall_clock_s,
        }

    @classmethod
    def from_json(cls, d: dict) -> "MetricsReport":
        return cls(d["config_hash"], list(d["seeds"]), list(d["c_td"]["per_seed"]),
                   list(d["ibs"]["per_seed"]), d.get("wall_clock_s", 0.0))

    def save(self, path) -> None:
        atomic_write_text(Path(path), json.dumps(self.to_json(), indent=2))

    @classmethod
    def combine(cls, reports: Sequence["MetricsReport"], wall_clock_s: float = 0.0) -> "MetricsReport":
        hashes = {r.config_hash for r in reports}
        return cls(hashes.pop() if len(hashes) == 1 else "mixed",
                   [s for r in reports for s in r.seeds],
                   [c for r in reports for c in r.c_td],
                   [b for r in reports for b in r.ibs], wall_clock_s)


def atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def predict_survival(checkpoint: Checkpoint, features) -> np.ndarray:
    if not checkpoint.has_head:
        raise ValueError("checkpoint has no survival head; finetune it first")
    enc, _ = _layers(checkpoint.params, "encoder", trainable=False)
    head, _ = _layers(checkpoint.params, "head", trainable=False)
    return survival_from_pmf(pmf_forward(head, encode(enc, features), checkpoint.grid.n_bins))


def score_predictions(surv, grid: TimeGrid, times, events, ibs_points: int = 100) -> tuple[float, float]:
    """C-td and IBS for an explicit survival matrix."""
    ev = EvalSet(surv, grid, times, events)
    return concordance_td(ev), integrated_brier(ev, n_points=ibs_points)


def evaluate(checkpoint: Checkpoint, dataset: Dataset, split: str = "test") -> MetricsReport:
    """C-td and IBS of a finetuned checkpoint on one split.

    Refuses to score samples the checkpoint was trained on.
    """
    part = dataset.get_split(split)
    if len(part) == 0:
        raise ValueError(f"split {split!r} is empty")
    leaked = set(part.ids) & set(checkpoint.train_ids)
    if leaked:
        raise ValueError(f"{len(leaked)} sample(s) of split {split!r} were used for training")
    surv = predict_survival(checkpoint, part.features)
    c, b = score_predictions(surv, checkpoint.grid, part.times, part.events, checkpoint.config.ibs_points)
    return MetricsReport(checkpoint.config.hash(), [checkpoint.seed], [c], [b])


def run_seed(config: ExperimentConfig, dataset: Dataset, seed: int) -> tuple[Checkpoint, MetricsReport]:
    pre = None if config.mode == "none" else pretrain(config, dataset, seed)
    ckpt, _ = finetune(config, dataset, pre, seed)
    return ckpt, evaluate(ckpt, dataset, "test")


def run_experiment(config: ExperimentConfig, dataset: Dataset) -> MetricsReport:
    """Full protocol for every seed in the config, scored on the test split."""
    start = time.perf_counter()
    reports = [run_seed(config, dataset, seed)[1] for seed in config.seeds]
    return MetricsReport.combine(reports, time.perf_counter() - start)


def _sweep_cell(args):
    config, dataset = args
    return run_experiment(config, dataset)


def ablation_sweep(config: ExperimentConfig, dataset: Dataset,
                   grid: Iterable[tuple[float, float]] = ABLATION_GRID,
                   workers: int = 1) -> list[dict]:
    """One TE-SSL run per (alpha, beta) pair; rows in the order given."""
    if config.mode != "tessl":
        raise ValueError("the alpha/beta sweep requires mode 'tessl'")
    cells = [replace(config, alpha=float(a), beta=float(b)) for a, b in grid]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_sweep_cell, [(c, dataset) for c in cells]))
    else:
        reports = [run_experiment(c, dataset) for c in cells]
    return [{"alpha": c.alpha, "beta": c.beta, "c_td": r.c_td_mean, "ibs": r.ibs_mean, "report": r.to_json()}
            for c, r in zip(cells, reports)]


def format_table(rows: Sequence[dict]) -> str:
    lines = ["alpha  beta   C-td    IBS", "-----  -----  ------  ------"]
    for r in rows:
        lines.append(f"{r['alpha']:<5g}  {r['beta']:<5g}  {r['c_td']:.4f}  {r['ibs']:.4f}")
    return "\n".join(lines)


# --------------------------------------------------------------- embeddings


def representations(checkpoint: Checkpoint, features) -> np.ndarray:
    enc, _ = _layers(checkpoint.params, "encoder", trainable=False)
    return encode(enc, features).data.copy()


def pca2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scores on the top two principal axes, and the axes as columns.

    Each axis is signed so its largest-magnitude loading is positive.
    """
    centered = x - x.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / max(len(x) - 1, 1)
    vals, vecs = np.linalg.eigh(cov)
    axes = vecs[:, np.argsort(vals)[::-1][:2]]
    flip = np.sign(axes[np.argmax(np.abs(axes), axis=0), np.arange(2)])
    axes = axes * np.where(flip == 0, 1.0, flip)
    return centered @ axes, axes


def export_embeddings(checkpoint: Checkpoint, dataset: Dataset, split: str, path,
                      projection: str = "none") -> np.ndarray:
    """Write id, time, event and embedding coordinates (or 2 principal scores) as CSV."""
    if projection not in ("none", "pca2"):
        raise ValueError(f"projection must be 'none' or 'pca2', got {projection!r}")
    part = dataset.get_split(split)
    if len(part) == 0:
        raise ValueError(f"split {split!r} is empty")
    coords = representations(checkpoint, part.features)
    if projection == "pca2":
        coords, _ = pca2(coords)
    prefix = "pc" if projection == "pca2" else "e"
    header = ["id", "time", "event"] + [f"{prefix}{j}" for j in range(coords.shape[1])]
    lines = [",".join(header)]
    for i in range(len(part)):
        lines.append(",".join([part.ids[i], f"{part.times[i]:.17g}", str(int(part.events[i]))]
                              + [f"{v:.17g}" for v in coords[i]]))
    atomic_write_text(Path(path), "\n".join(lines) + "\n")
    return coords
