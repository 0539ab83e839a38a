import json
from dataclasses import fields

import pytest

from tessl.cli import ConfigError, build_parser, format_config, parse_config, run
from tessl.pipeline import ExperimentConfig

TINY = ["--hidden_dim", "8", "--embed_dim", "8", "--proj_dim", "4", "--batch_size", "8",
        "--accum_steps", "2", "--pretrain_epochs", "2", "--finetune_epochs", "2", "--seeds", "0,1",
        "--n_bins", "4"]


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "cfg"
    p.write_text("")
    assert parse_config(p) == ExperimentConfig()


def test_file_values_and_comments(tmp_path):
    p = tmp_path / "cfg"
    p.write_text("# comment\nalpha = 1.3\nbeta=1.0  # trailing\nseeds = 4,5\nfreeze_encoder = yes\n")
    cfg = parse_config(p)
    assert (cfg.alpha, cfg.beta, cfg.seeds, cfg.freeze_encoder) == (1.3, 1.0, (4, 5), True)


def test_negative_tau_names_key(tmp_path):
    p = tmp_path / "cfg"
    p.write_text("tau = -1\n")
    with pytest.raises(ConfigError, match="tau"):
        parse_config(p)


def test_override_beats_file(tmp_path):
    p = tmp_path / "cfg"
    p.write_text("alpha = 1.1\nbeta = 1.0\n")
    assert parse_config(p, ["alpha=1.3"]).alpha == 1.3


@pytest.mark.parametrize("text,key", [("bogus = 1\n", "bogus"), ("n_bins = ten\n", "n_bins"),
                                      ("freeze_encoder = maybe\n", "freeze_encoder")])
def test_bad_file_entries(tmp_path, text, key):
    p = tmp_path / "cfg"
    p.write_text(text)
    with pytest.raises(ConfigError, match=key):
        parse_config(p)


def test_missing_equals_sign(tmp_path):
    p = tmp_path / "cfg"
    p.write_text("alpha 1.0\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config(p)


def test_resolved_text_round_trips(tmp_path):
    cfg = ExperimentConfig(alpha=1.5, beta=1.0, seeds=(7,), data_path="x.csv", freeze_encoder=True)
    p = tmp_path / "cfg"
    p.write_text(format_config(cfg))
    assert parse_config(p) == cfg


def test_help_lists_schema_exactly():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.choices and "pretrain" in a.choices)
    schema = {f.name for f in fields(ExperimentConfig)}
    for name, p in sub.choices.items():
        listed = {a.dest[len("key__"):] for a in p._actions if a.dest.startswith("key__")}
        assert listed == schema, name
        text = p.format_help()
        for key in schema:
            assert f"--{key}" in text, (name, key)


def test_help_exits_zero(capsys):
    assert run(["sweep", "--help"]) == 0
    assert "--lars_trust_coeff" in capsys.readouterr().out


def test_unknown_subcommand(capsys):
    assert run(["bogus"]) == 1
    assert "usage" in capsys.readouterr().err


def test_bad_flag_value_is_usage_error(tmp_path, capsys):
    assert run(["pretrain", "--out", str(tmp_path), "--tau", "-1"]) == 1
    assert "tau" in capsys.readouterr().err


def test_runtime_failure_exit_two(tmp_path):
    assert run(["finetune", "--out", str(tmp_path), "--mode", "none", "--data_path", str(tmp_path / "no.csv")]) == 2


def test_generate_data(tmp_path):
    out = tmp_path / "data.csv"
    assert run(["generate-data", "--n", "200", "--d", "16", "--seed", "7", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 201
    assert lines[0].split(",")[:3] == ["id", "time", "event"] and len(lines[0].split(",")) == 19
    assert parse_config(tmp_path / "data.csv.config").data_seed == 7


def test_overwrite_needs_force(tmp_path):
    out = tmp_path / "data.csv"
    args = ["generate-data", "--n", "50", "--d", "4", "--out", str(out)]
    assert run(args) == 0
    assert run(args) == 1
    assert run(args + ["--force"]) == 0


def test_pretrain_finetune_evaluate_chain(tmp_path):
    data = tmp_path / "data.csv"
    assert run(["generate-data", "--n", "80", "--d", "6", "--out", str(data)]) == 0
    cfg = tmp_path / "cfg"
    cfg.write_text(f"data_path = {data}\n")
    run_dir = tmp_path / "run"
    assert run(["pretrain", "--config", str(cfg), "--mode", "tessl", "--out", str(run_dir)] + TINY) == 0
    assert (run_dir / "pretrain_seed1.ckpt").is_file()
    assert run(["finetune", "--out", str(run_dir)]) == 0
    assert run(["evaluate", "--out", str(run_dir)]) == 0
    report = json.loads((run_dir / "metrics.json").read_text())
    assert report["seeds"] == [0, 1] and len(report["c_td"]["per_seed"]) == 2
    assert parse_config(run_dir / "config.resolved").hidden_dim == 8
    assert run(["export-embeddings", "--out", str(run_dir), "--projection", "pca2", "--seed", "1"]) == 0
    emb = (run_dir / "embeddings_test_finetune_seed1.csv").read_text().splitlines()
    assert emb[0] == "id,time,event,pc0,pc1"


def test_finetune_needs_pretrained_checkpoint(tmp_path):
    assert run(["finetune", "--out", str(tmp_path), "--n_subjects", "40", "--n_features", "4"] + TINY) == 2


def test_changed_config_in_run_dir_needs_force(tmp_path):
    base = ["--out", str(tmp_path), "--n_subjects", "60", "--n_features", "4", "--mode", "none"] + TINY
    assert run(["finetune"] + base) == 0
    assert run(["evaluate", "--out", str(tmp_path), "--tau", "0.1"]) == 1
    assert run(["evaluate", "--out", str(tmp_path)]) == 0


def test_sweep_writes_table(tmp_path, monkeypatch):
    import tessl.cli as cli

    monkeypatch.setattr(cli, "ablation_sweep",
                        lambda cfg, ds, workers=1: [{"alpha": 1.0, "beta": 0.5, "c_td": 0.6, "ibs": 0.2,
                                                     "report": {}}])
    assert run(["sweep", "--out", str(tmp_path), "--n_subjects", "40", "--n_features", "4"]) == 0
    assert "0.6000" in (tmp_path / "sweep.txt").read_text()
    assert json.loads((tmp_path / "sweep.json").read_text())[0]["beta"] == 0.5
