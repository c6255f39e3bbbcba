"""Tests for the command request and response envelope models."""

import uuid

import pytest
from pydantic import ValidationError

from app.models.protocol import (
    EXIT_CONFIG_ERROR,
    EXIT_PASS,
    EXIT_RUNTIME_ERROR,
    CommandResult,
    RunManifest,
)


def test_run_manifest_defaults():
    manifest = RunManifest(command="analyze", config_path="configs/analyze_friedman.json", output_dir="runs/a")
    assert manifest.master_seed is None
    assert manifest.threads == 0
    assert manifest.format == "both"
    assert manifest.validate_as is None


def test_run_manifest_validation():
    """Unknown commands, negative threads and out-of-range seeds are rejected."""
    with pytest.raises(ValidationError):
        RunManifest(command="plot", config_path="c.json", output_dir="out")
    with pytest.raises(ValidationError):
        RunManifest(command="analyze", config_path="c.json", output_dir="out", threads=-1)
    with pytest.raises(ValidationError):
        RunManifest(command="analyze", config_path="c.json", output_dir="out", master_seed=1 << 64)
    with pytest.raises(ValidationError):
        RunManifest(command="analyze", config_path="c.json", output_dir="out", format="xml")

    manifest = RunManifest(command="simulate", config_path="c.json", output_dir="out", master_seed=(1 << 64) - 1)
    assert manifest.master_seed == (1 << 64) - 1


def test_command_result_success():
    result = CommandResult(output={"lambda_h": 6.0})
    assert not result.is_error
    assert result.exit_code == EXIT_PASS
    assert result.error_message is None
    uuid.UUID(result.result_id)


def test_command_result_error_and_unique_ids():
    result = CommandResult(is_error=True, error_message="bad config", exit_code=EXIT_CONFIG_ERROR)
    other = CommandResult(is_error=True, error_message="boom", exit_code=EXIT_RUNTIME_ERROR)
    assert result.exit_code == 64
    assert other.exit_code == 70
    assert result.result_id != other.result_id
