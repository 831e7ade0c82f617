import json

import pytest

from dstgnn.cli import main

CONFIG = """
data: {{root: {root}/data, strict_rows: false}}
synth: {{n_subjects: 4, duration_s: 12.0}}
model: {{gat_hidden: 4, gru_hidden: 4, mlp_hidden: 4}}
optim: {{epochs: 2}}
eval: {{seeds: [1, 2]}}
baseline: {{epochs: 3}}
explain: {{ig_steps: 4, top_k: 5}}
output: {{dir: {root}/out}}
"""


@pytest.fixture()
def cfg_path(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(CONFIG.format(root=tmp_path))
    assert main(["synth", "--config", str(p)]) == 0
    return p


def _out(cfg_path):
    return cfg_path.parent / "out"


def test_loso_report_counts(cfg_path):
    assert main(["loso", "--config", str(cfg_path)]) == 0
    d = _out(cfg_path) / "loso"
    rep = json.loads((d / "run_report.json").read_text())
    assert [len(s["folds"]) for s in rep["seeds"]] == [4, 4]
    assert len((d / "metrics.csv").read_text().splitlines()) == 1 + 8
    manifest = json.loads((d / "manifest.json").read_text())
    assert manifest["threads"] == 1 and "run_report.json" in manifest["artifacts"]
    assert json.loads((d / "config_resolved.json").read_text())["optim.epochs"] == 2


def test_ablate_tag(cfg_path):
    assert main(["ablate", "--variant", "fully_connected", "--config", str(cfg_path)]) == 0
    rep = json.loads((_out(cfg_path) / "ablate_fully_connected" / "run_report.json").read_text())
    assert rep["tag"] == "fully_connected"
    assert rep["config"]["model.variant"] == "fully_connected"


def test_explain_without_checkpoint(cfg_path, capsys):
    assert main(["explain", "--config", str(cfg_path)]) != 0
    err = capsys.readouterr().err.strip()
    assert "checkpoint not found" in err and len(err.splitlines()) == 1


def test_train_explain_report(cfg_path):
    for cmd in (["train"], ["explain"], ["baseline", "--kind", "logreg"], ["stats"], ["graphs"],
                ["report"]):
        assert main(cmd + ["--config", str(cfg_path)]) == 0, cmd
    out = _out(cfg_path)
    assert (out / "checkpoints" / "model.json").exists()
    for name in ("ig_attributions.csv", "channel_importance.csv", "feature_importance.csv",
                 "edge_importance.csv", "top_edges.csv"):
        assert (out / "explain" / name).exists()
    summary = json.loads((out / "report" / "summary.json").read_text())
    assert summary["baselines"]["logreg"]["aggregate"] is not None
    assert summary["baselines"]["logreg"]["reference"]["f1"] == 34.73
    assert summary["group_stats"] and summary["explain"]["top_edges"]
    assert summary["pli_wpli"]["reference"]["mean_pearson_r"] == 0.623


def test_bad_config_exits_nonzero(cfg_path, capsys):
    assert main(["loso", "--config", str(cfg_path), "--set", "model.flux=1"]) == 2
    assert "model.flux" in capsys.readouterr().err
    assert main(["loso", "--config", str(cfg_path), "--data-root", "/no/such/dir"]) == 2


def test_thread_env_is_recorded(cfg_path, monkeypatch):
    monkeypatch.setenv("DSTGNN_THREADS", "2")
    assert main(["preprocess", "--config", str(cfg_path)]) == 0
    m = json.loads((_out(cfg_path) / "preprocess" / "manifest.json").read_text())
    assert m["threads"] == 2
    monkeypatch.setenv("DSTGNN_THREADS", "zero")
    assert main(["preprocess", "--config", str(cfg_path)]) == 2
