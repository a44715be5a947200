from __future__ import annotations

import json

import yaml

from fedbench.cli import bundled_config, main


def test_bundled_configs_parse():
    from fedbench.orchestrator import parse_config

    for name in ("synthetic_2client", "breast_fedavg", "give_credit_gbdt", "default_credit_vertical_lr"):
        assert parse_config(bundled_config(name)).scenario


def test_print_effective_config(capsys):
    assert main(["run", "synthetic_2client", "--print-effective-config", "--repeats", "3"]) == 0
    cfg = yaml.safe_load(capsys.readouterr().out)
    assert cfg["repeats"] == 3 and cfg["training"]["clients_per_round"] == 2
    assert cfg["deployment"]["mode"] == "local_processes"


def test_run_then_analyze(tmp_path, capsys, cache_dir):
    out = tmp_path / "runs"
    assert main(["run", "synthetic_2client", "--mode", "in_process", "--repeats", "1",
                 "--out-dir", str(out), "--run-id", "r1"]) == 0
    text = capsys.readouterr().out
    assert "other_cost_s" in text and (out / "r1" / "report.json").exists()
    assert main(["run", "synthetic_2client", "--mode", "in_process", "--repeats", "1",
                 "--out-dir", str(out), "--run-id", "r2"]) == 0
    capsys.readouterr()
    assert main(["analyze", str(out / "r1"), "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["model_perf"]["metric"] == "auc"
    assert main(["analyze", str(out / "r1"), str(out / "r2"), "--csv"]) == 0
    assert capsys.readouterr().out.startswith("label,")


def test_run_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: breast_vertical\nalgorithm: fedavg\nmodel: mlp_8\n")
    assert main(["run", str(bad)]) == 1
    assert "IncompatibleCombination" in capsys.readouterr().err


def test_fetch(capsys, cache_dir):
    assert main(["fetch", "synthetic_vertical"]) == 0
    assert "vertical, 2 parties" in capsys.readouterr().out


def test_advise(tmp_path, capsys):
    req = tmp_path / "req.yaml"
    req.write_text("setting: vertical\nmodel: tree\npriority: [time, communication, memory]\n")
    assert main(["advise", str(req)]) == 0
    out = capsys.readouterr().out
    assert "#1 FedTree" in out and "decision trace:" in out
    assert main(["advise", str(req), "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["ranking"][0]["framework"] == "FedTree"
    req.write_text("setting: vertical\nmodel: neural_network\ndp: 'yes'\n")
    assert main(["advise", str(req)]) == 2
    assert "no match" in capsys.readouterr().out
