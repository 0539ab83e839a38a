"""Command-line entry point: ``tessl <subcommand> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields, replace
from pathlib import Path
from typing import Optional, Sequence

from .data import save_csv
from .pipeline import (
    ExperimentConfig,
    MetricsReport,
    ablation_sweep,
    atomic_write_text,
    evaluate,
    export_embeddings,
    finetune,
    format_table,
    load_checkpoint,
    load_dataset,
    pretrain,
    save_checkpoint,
)

log = logging.getLogger("tessl")

RESOLVED = "config.resolved"
FIELDS = {f.name: f for f in fields(ExperimentConfig)}

# shorthand flags of generate-data
ALIASES = {"n": "n_subjects", "d": "n_features", "seed": "data_seed", "stages": "n_stages"}


class UsageError(Exception):
    pass


class ConfigError(UsageError, ValueError):
    pass


# ------------------------------------------------------------------ config text


def _coerce(key: str, raw: str):
    f = FIELDS.get(key)
    if f is None:
        raise ConfigError(f"unknown config key {key!r}")
    default = f.default
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(s) for s in raw.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"invalid config key {key!r}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def _parse_pairs(text: str, source: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}, line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(key, value)
    return out


def format_config(config: ExperimentConfig) -> str:
    lines = []
    for name, value in config.to_dict().items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"


def parse_config(path=None, overrides: Sequence[str] | dict = (), base: Optional[dict] = None) -> ExperimentConfig:
    """Defaults, then ``base``, then the file at ``path``, then ``overrides``.

    Overrides are ``key=value`` strings or an already split mapping.
    """
    values = dict(base or {})
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(_parse_pairs(p.read_text(), str(p)))
    if isinstance(overrides, dict):
        items = list(overrides.items())
    else:
        items = []
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, value = item.split("=", 1)
            items.append((key.strip(), value))
    for key, value in items:
        values[key] = _coerce(key, value) if isinstance(value, str) else value
    try:
        return ExperimentConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ------------------------------------------------------------------ argparse


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _add_common(p: argparse.ArgumentParser, out_help: str, out_default: Optional[str]):
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--out", default=out_default, required=out_default is None, help=out_help)
    p.add_argument("--force", action="store_true", help="allow overwriting existing files")
    keys = p.add_argument_group("config keys")
    for name, f in FIELDS.items():
        flags = [f"--{name}"] + ([f"--{name.replace('_', '-')}"] if "_" in name else [])
        keys.add_argument(*flags, dest=f"key__{name}", metavar="V",
                          help=f"{f.metadata['help']} (default: {_show(f.default)})")


def _show(value):
    if isinstance(value, tuple):
        return ",".join(map(str, value))
    if isinstance(value, bool):
        return str(value).lower()
    return repr(value) if value == "" else value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tessl", description="Time-aware contrastive pretraining for survival models.",
                     allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("generate-data", help="write a seeded synthetic cohort as CSV", allow_abbrev=False)
    p.add_argument("--n", dest="alias__n", type=int, help="number of subjects (n_subjects)")
    p.add_argument("--d", dest="alias__d", type=int, help="feature dimension (n_features)")
    p.add_argument("--seed", dest="alias__seed", type=int, help="generator seed (data_seed)")
    p.add_argument("--stages", dest="alias__stages", type=int, help="latent stages (n_stages)")
    _add_common(p, "output CSV path", None)

    runs = "run directory for checkpoints, metrics and the resolved config"
    p = sub.add_parser("pretrain", help="contrastive pretraining, one checkpoint per seed", allow_abbrev=False)
    _add_common(p, runs, "runs")

    p = sub.add_parser("finetune", help="train encoder and survival head, one checkpoint per seed",
                       allow_abbrev=False)
    _add_common(p, runs, "runs")

    p = sub.add_parser("evaluate", help="score finetuned checkpoints and write metrics.json", allow_abbrev=False)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    _add_common(p, runs, "runs")

    p = sub.add_parser("sweep", help="alpha/beta ablation table", allow_abbrev=False)
    p.add_argument("--workers", type=int, default=1, help="worker processes, one grid cell each")
    _add_common(p, runs, "runs")

    p = sub.add_parser("export-embeddings", help="encoder representations of one split as CSV",
                       allow_abbrev=False)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--stage", default="finetune", choices=("pretrain", "finetune"),
                   help="which checkpoint to read")
    p.add_argument("--seed", dest="ckpt_seed", type=int, help="checkpoint seed (default: first configured seed)")
    p.add_argument("--projection", default="none", choices=("none", "pca2"))
    _add_common(p, runs, "runs")
    return parser


def _resolve(args, base: Optional[dict] = None) -> ExperimentConfig:
    flags = {k[len("key__"):]: v for k, v in vars(args).items() if k.startswith("key__") and v is not None}
    for short, key in ALIASES.items():
        v = getattr(args, f"alias__{short}", None)
        if v is not None:
            flags[key] = str(v)
    cfg = parse_config(args.config, args.set, base)
    return parse_config(None, flags, cfg.to_dict()) if flags else cfg


# ------------------------------------------------------------------ file output


def _writable(path: Path, force: bool) -> Path:
    if path.exists() and not force:
        raise UsageError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_resolved(path: Path, config: ExperimentConfig, force: bool) -> None:
    text = format_config(config)
    if path.exists() and path.read_text() == text:
        return
    atomic_write_text(_writable(path, force), text)


def _run_base(out: Path) -> Optional[dict]:
    """Earlier stages in the same run directory seed the config."""
    p = out / RESOLVED
    if p.is_file():
        return parse_config(p).to_dict()
    return None


def _ckpt_path(out: Path, stage: str, seed: int) -> Path:
    return out / f"{stage}_seed{seed}.ckpt"


def _require(path: Path, hint: str) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found; {hint}")
    return path


# ------------------------------------------------------------------ commands


def cmd_generate_data(args) -> None:
    cfg = _resolve(args)
    out = Path(args.out)
    _writable(out, args.force)
    ds = load_dataset(replace(cfg, data_path=""))
    save_csv(ds, out)
    _write_resolved(out.with_name(out.name + ".config"), cfg, args.force)
    log.info("wrote %d subjects to %s", len(ds), out)


def cmd_pretrain(args) -> None:
    out = Path(args.out)
    cfg = _resolve(args, _run_base(out))
    if cfg.mode == "none":
        raise UsageError("mode 'none' has no pretraining stage")
    targets = [_writable(_ckpt_path(out, "pretrain", s), args.force) for s in cfg.seeds]
    _write_resolved(out / RESOLVED, cfg, args.force)
    ds = load_dataset(cfg)
    for seed, path in zip(cfg.seeds, targets):
        ckpt = pretrain(cfg, ds, seed)
        save_checkpoint(ckpt, path)
        log.info("seed %d: final loss %.4f -> %s", seed, ckpt.history[-1] if ckpt.history else float("nan"), path)


def cmd_finetune(args) -> None:
    out = Path(args.out)
    cfg = _resolve(args, _run_base(out))
    targets = [_writable(_ckpt_path(out, "finetune", s), args.force) for s in cfg.seeds]
    report_path = _writable(out / "val_metrics.json", args.force)
    sources = {}
    if cfg.mode != "none":
        sources = {s: _require(_ckpt_path(out, "pretrain", s), "run 'pretrain' first") for s in cfg.seeds}
    _write_resolved(out / RESOLVED, cfg, args.force)
    ds = load_dataset(cfg)
    reports = []
    for seed, path in zip(cfg.seeds, targets):
        pre = load_checkpoint(sources[seed]) if seed in sources else None
        ckpt, val = finetune(cfg, ds, pre, seed)
        save_checkpoint(ckpt, path)
        reports.append(val)
        log.info("seed %d: val C-td %.4f, IBS %.4f", seed, val.c_td[0], val.ibs[0])
    MetricsReport.combine(reports).save(report_path)


def cmd_evaluate(args) -> None:
    out = Path(args.out)
    cfg = _resolve(args, _run_base(out))
    report_path = _writable(out / "metrics.json", args.force)
    sources = [_require(_ckpt_path(out, "finetune", s), "run 'finetune' first") for s in cfg.seeds]
    _write_resolved(out / RESOLVED, cfg, args.force)
    ds = load_dataset(cfg)
    start = time.perf_counter()
    reports = [evaluate(load_checkpoint(p), ds, args.split) for p in sources]
    report = MetricsReport.combine(reports, time.perf_counter() - start)
    report.save(report_path)
    print(f"C-td {report.c_td_mean:.4f}  IBS {report.ibs_mean:.4f}  ({args.split}, seeds {list(cfg.seeds)})")


def cmd_sweep(args) -> None:
    out = Path(args.out)
    cfg = _resolve(args, _run_base(out))
    json_path = _writable(out / "sweep.json", args.force)
    table_path = _writable(out / "sweep.txt", args.force)
    _write_resolved(out / RESOLVED, cfg, args.force)
    rows = ablation_sweep(cfg, load_dataset(cfg), workers=args.workers)
    table = format_table(rows)
    atomic_write_text(json_path, json.dumps(rows, indent=2) + "\n")
    atomic_write_text(table_path, table + "\n")
    print(table)


def cmd_export_embeddings(args) -> None:
    out = Path(args.out)
    cfg = _resolve(args, _run_base(out))
    seed = cfg.seeds[0] if args.ckpt_seed is None else args.ckpt_seed
    source = _require(_ckpt_path(out, args.stage, seed), f"run '{args.stage}' first")
    target = _writable(out / f"embeddings_{args.split}_{args.stage}_seed{seed}.csv", args.force)
    _write_resolved(out / RESOLVED, cfg, args.force)
    export_embeddings(load_checkpoint(source), load_dataset(cfg), args.split, target, args.projection)
    log.info("wrote %s", target)


COMMANDS = {
    "generate-data": cmd_generate_data,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "export-embeddings": cmd_export_embeddings,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        log.debug("failure", exc_info=True)
        return 2
    return 0


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    sys.exit(run())
