"""Tests for the output writers."""

import json

import numpy as np
import pytest

from app.services import output_service


@pytest.mark.parametrize(
    "value,expected",
    [
        (0.1, "0.10000000000000001"),
        (np.float64(1 / 3), "0.33333333333333331"),
        (7, "7"),
        (np.int64(-2), "-2"),
        (True, "true"),
        (None, ""),
        ("inconclusive", "inconclusive"),
    ],
)
def test_format_cell(value, expected):
    assert output_service.format_cell(value) == expected


def test_write_csv_uses_lf_and_full_precision(tmp_path):
    path = output_service.write_csv(tmp_path / "rows.csv", ["n", "x"], [[1, 0.1], [2, 2.5]])
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    assert raw.decode("utf-8") == "n,x\n1,0.10000000000000001\n2,2.5\n"


def test_write_json_handles_numpy_and_non_finite(tmp_path):
    payload = {"a": np.array([1.0, 2.0]), "b": np.int32(3), "c": float("inf"), "d": [float("nan"), 1.5]}
    path = output_service.write_json(tmp_path / "out.json", payload)
    assert json.loads(path.read_text()) == {"a": [1.0, 2.0], "b": 3, "c": None, "d": [None, 1.5]}


@pytest.mark.parametrize("fmt,names", [("json", {"cmd.json"}), ("csv", {"cmd.csv"}), ("both", {"cmd.json", "cmd.csv"})])
def test_write_outputs_respects_format(tmp_path, fmt, names):
    out = tmp_path / "nested" / "dir"
    written = output_service.write_outputs(str(out), "cmd", fmt, {"ok": True}, ["a"], [[1]])
    assert {p.name for p in written} == names
    assert {p.name for p in out.iterdir()} == names


def test_write_outputs_skips_csv_without_header(tmp_path):
    written = output_service.write_outputs(str(tmp_path), "cmd", "both", {"ok": True})
    assert [p.name for p in written] == ["cmd.json"]


def test_write_manifest(tmp_path):
    path = output_service.write_manifest(tmp_path, {"command": "simulate"}, 42, {"n_steps": 10})
    echo = json.loads(path.read_text())
    assert echo["manifest"] == {"command": "simulate"}
    assert echo["resolved_seed"] == 42
    assert echo["config"] == {"n_steps": 10}
    assert "written_at" in echo


def test_verdict_rows():
    verdicts = [
        {"name": "rate_exponent", "passed": True, "metrics": {"slope": -0.3, "labels": ["x"]}},
        {"name": "convergence", "passed": None, "metrics": {}},
    ]
    header, rows = output_service.verdict_rows(verdicts)
    assert header == ["verdict", "passed", "metric", "value"]
    assert rows == [["rate_exponent", True, "slope", -0.3], ["convergence", "inconclusive", "", ""]]


def test_summary_rows():
    summary = {
        "checkpoints": [
            {"n": 100, "mean_y_over_n": [1.5, 2.5], "dist_limit_mean": 0.2, "dist_limit_se": None},
        ]
    }
    header, rows = output_service.summary_rows(summary)
    assert header == ["n", "statistic", "component", "value"]
    assert rows == [
        [100, "mean_y_over_n", 1, 1.5],
        [100, "mean_y_over_n", 2, 2.5],
        [100, "dist_limit_mean", "", 0.2],
    ]
