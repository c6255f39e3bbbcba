"""Tests for the command router."""

import json
from unittest.mock import AsyncMock, MagicMock

import pytest

from app.core.exceptions import ConfigError
from app.models.experiments import SimulateConfig, VerifyConvergenceConfig
from app.models.protocol import RunManifest
from app.routers import commands
from app.routers.commands import dispatch, validate_config

BALANCED = {"kind": "deterministic", "d": 2, "H": [[2, 1], [1, 2]]}


@pytest.fixture
def mock_adapter():
    """Creates a mock LabAdapter."""
    adapter = MagicMock()
    adapter.simulate_tool = AsyncMock(return_value={"success": False, "error_message": "boom", "error_code": "Extinction"})
    adapter.verify_convergence_tool = AsyncMock(
        return_value={
            "success": True,
            "data": {
                "verdicts": [{"name": "limit_distance", "passed": False, "metrics": {"mean": 0.4}}],
                "summary": {"checkpoints": [{"n": 100, "mean_y_over_n": [1.5, 1.5], "dist_limit_mean": 0.4}]},
                "exit_code": 1,
            },
        }
    )
    return adapter


def manifest(command, config_path, output_dir, **extra):
    return RunManifest(command=command, config_path=config_path, output_dir=str(output_dir), **extra)


def test_commands_registry():
    assert set(commands.COMMANDS) == {
        "analyze",
        "simulate",
        "embed",
        "verify-convergence",
        "verify-varpi",
        "verify-rate",
        "probe-divergence",
        "verify-drift",
    }
    ensembles = {name for name, spec in commands.COMMANDS.items() if spec.ensemble}
    assert ensembles == {"verify-convergence", "verify-varpi", "verify-rate", "probe-divergence", "verify-drift"}
    listed = commands.list_commands()
    assert [entry["name"] for entry in listed] == list(commands.COMMANDS)
    assert all("properties" in entry["config_schema"] for entry in listed)


def test_validate_config_fills_defaults(write_config):
    path = write_config({"policy": BALANCED, "Y0": [1, 1], "n_max": 2000})
    config = validate_config(path, "verify-convergence")
    assert isinstance(config, VerifyConvergenceConfig)
    assert config.fallback_p == [0.5, 0.5]
    assert config.checkpoints[0] == 100 and config.checkpoints[-1] == 2000
    assert commands.normalized(config)["master_seed"] == 0


def test_validate_config_seed_override(write_config):
    path = write_config({"policy": BALANCED, "Y0": [1, 1], "n_steps": 5, "master_seed": 3})
    assert validate_config(path, "simulate").master_seed == 3
    assert validate_config(path, "simulate", master_seed=99).master_seed == 99
    assert not hasattr(validate_config(write_config({"H": [[1]]}, "a.json"), "analyze", master_seed=5), "master_seed")


def test_validate_config_collects_every_error(write_config):
    path = write_config({"policy": BALANCED, "Y0": [1, 1, 1], "n_steps": -1})
    with pytest.raises(ConfigError) as excinfo:
        validate_config(path, "simulate")
    errors = excinfo.value.errors
    assert any(e.startswith("n_steps:") for e in errors)
    assert "simulate" in str(excinfo.value)


@pytest.mark.parametrize(
    "content,message",
    [
        (None, "Cannot read configuration"),
        ("{not json", "not valid JSON"),
        ("[1, 2]", "must hold a JSON object"),
    ],
)
def test_validate_config_file_errors(tmp_path, content, message):
    path = tmp_path / "config.json"
    if content is not None:
        path.write_text(content)
    with pytest.raises(ConfigError, match=message):
        validate_config(str(path), "analyze")


def test_validate_config_unknown_command(write_config):
    with pytest.raises(ConfigError):
        validate_config(write_config({}), "validate")


@pytest.mark.asyncio
async def test_dispatch_analyze_writes_outputs(write_config, tmp_path):
    out = tmp_path / "run"
    result = await dispatch(manifest("analyze", write_config({"H": [[5, 1], [1, 5]]}), out))
    assert result.exit_code == 0
    assert not result.is_error
    assert {p.name for p in out.iterdir()} == {"analyze.json", "analyze.csv", "manifest.json"}
    payload = json.loads((out / "analyze.json").read_text())
    assert payload["profile"]["lambda_h"] == pytest.approx(6.0)
    lines = (out / "analyze.csv").read_text().splitlines()
    assert lines[0] == "class,component,v,u"
    assert len(lines) == 3


@pytest.mark.asyncio
async def test_dispatch_simulate_csv(write_config, tmp_path):
    out = tmp_path / "sim"
    config = write_config({"policy": BALANCED, "Y0": [1, 1], "n_steps": 20, "checkpoints": [10, 20]})
    result = await dispatch(manifest("simulate", config, out, format="csv", master_seed=11))
    assert result.exit_code == 0
    assert {p.name for p in out.iterdir()} == {"simulate.csv", "manifest.json"}
    rows = (out / "simulate.csv").read_text().splitlines()
    assert rows[0] == "n,Y_1,Y_2,N_1,N_2"
    assert [row.split(",")[0] for row in rows[1:]] == ["10", "20"]
    echo = json.loads((out / "manifest.json").read_text())
    assert echo["resolved_seed"] == 11
    assert echo["config"]["master_seed"] == 11


@pytest.mark.asyncio
async def test_dispatch_config_error(write_config, tmp_path):
    out = tmp_path / "bad"
    result = await dispatch(manifest("simulate", write_config({"policy": BALANCED}), out))
    assert result.is_error
    assert result.exit_code == 64
    assert result.output["errors"]
    echo = json.loads((out / "manifest.json").read_text())
    assert echo["config"] is None


@pytest.mark.asyncio
async def test_dispatch_validate(write_config, tmp_path):
    path = write_config({"policy": BALANCED, "Y0": [1, 1], "n_steps": 4})
    result = await dispatch(manifest("validate", path, tmp_path, validate_as="simulate"))
    assert result.exit_code == 0
    assert result.output == SimulateConfig.model_validate(json.loads(open(path).read())).model_dump(mode="json")

    missing = await dispatch(manifest("validate", path, tmp_path))
    assert missing.exit_code == 64


@pytest.mark.asyncio
async def test_dispatch_adapter_failure(write_config, tmp_path, mock_adapter):
    config = write_config({"policy": BALANCED, "Y0": [1, 1], "n_steps": 4})
    result = await dispatch(manifest("simulate", config, tmp_path), adapter=mock_adapter)
    assert result.is_error
    assert result.exit_code == 70
    assert result.output == {"error_code": "Extinction"}
    assert result.error_message == "boom"


@pytest.mark.asyncio
async def test_dispatch_unexpected_error(write_config, tmp_path, mock_adapter):
    mock_adapter.simulate_tool.side_effect = RuntimeError("adapter crashed")
    config = write_config({"policy": BALANCED, "Y0": [1, 1], "n_steps": 4})
    result = await dispatch(manifest("simulate", config, tmp_path), adapter=mock_adapter)
    assert result.exit_code == 70
    assert "adapter crashed" in result.error_message


@pytest.mark.asyncio
async def test_dispatch_verdict_exit_code(write_config, tmp_path, mock_adapter):
    config = write_config({"policy": BALANCED, "Y0": [1, 1], "n_max": 100})
    out = tmp_path / "verdicts"
    result = await dispatch(manifest("verify-convergence", config, out), adapter=mock_adapter)
    assert result.exit_code == 1
    validated = mock_adapter.verify_convergence_tool.await_args.args[0]
    assert isinstance(validated, VerifyConvergenceConfig)
    assert mock_adapter.verify_convergence_tool.await_args.kwargs == {"threads": None}
    lines = (out / "verify-convergence.csv").read_text().splitlines()
    assert lines[0] == "n,statistic,component,value"
    assert lines[1] == "100,mean_y_over_n,1,1.5"


@pytest.mark.asyncio
async def test_dispatch_passes_thread_cap(write_config, tmp_path, mock_adapter):
    config = write_config({"policy": BALANCED, "Y0": [1, 1], "n_max": 100})
    await dispatch(manifest("verify-convergence", config, tmp_path, threads=3), adapter=mock_adapter)
    assert mock_adapter.verify_convergence_tool.await_args.kwargs == {"threads": 3}
