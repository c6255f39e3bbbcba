"""Tests for the command-line entry point."""

import json

import pytest

from app.main import build_parser, main, manifest_from_args

BALANCED = {"kind": "deterministic", "d": 2, "H": [[2, 1], [1, 2]]}


def test_parser_builds_manifest():
    args = build_parser().parse_args(
        ["simulate", "--config", "c.json", "--out", "runs/x", "--seed", "7", "--threads", "2", "--format", "csv"]
    )
    manifest = manifest_from_args(args)
    assert manifest.command == "simulate"
    assert manifest.master_seed == 7
    assert manifest.threads == 2
    assert manifest.format == "csv"
    assert manifest.validate_as is None


def test_validate_requires_target():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["validate", "--config", "c.json"])
    args = build_parser().parse_args(["validate", "--config", "c.json", "--as", "embed"])
    assert manifest_from_args(args).validate_as == "embed"


def test_main_runs_analyze(write_config, tmp_path):
    out = tmp_path / "analyze"
    code = main(["analyze", "--config", write_config({"H": [[5, 1], [1, 5]]}), "--out", str(out)])
    assert code == 0
    assert (out / "analyze.json").exists()


def test_main_validate_prints_normalized_config(write_config, tmp_path, capsys):
    path = write_config({"policy": BALANCED, "Y0": [1, 1], "n_steps": 3})
    code = main(["validate", "--config", path, "--out", str(tmp_path), "--as", "simulate"])
    assert code == 0
    echo = json.loads(capsys.readouterr().out)
    assert echo["fallback_p"] == [0.5, 0.5]
    assert echo["checkpoints"] == [1, 2, 3]


def test_main_reports_config_errors(write_config, tmp_path, capsys):
    code = main(["simulate", "--config", write_config({"policy": BALANCED}), "--out", str(tmp_path)])
    assert code == 64
    err = capsys.readouterr().err
    assert "Invalid configuration for simulate" in err
    assert "Y0:" in err


def test_main_rejects_negative_seed(tmp_path):
    assert main(["analyze", "--config", "c.json", "--out", str(tmp_path), "--seed", "-1"]) == 64
