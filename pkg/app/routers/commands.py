"""Command router for the urn lab.

This module maps command names to their configuration models and adapter
methods, validates configuration files, dispatches validated runs to the
LabAdapter and persists whatever the command produced.
"""

import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Type

from pydantic import BaseModel, ValidationError

from ..core.exceptions import ConfigError
from ..dependencies.dependencies_service import get_lab_adapter
from ..models.experiments import (
    AnalyzeConfig,
    EmbedConfig,
    ProbeDivergenceConfig,
    SimulateConfig,
    VerifyConvergenceConfig,
    VerifyDriftConfig,
    VerifyRateConfig,
    VerifyVarpiConfig,
)
from ..models.protocol import EXIT_CONFIG_ERROR, EXIT_PASS, EXIT_RUNTIME_ERROR, CommandResult, RunManifest
from ..services import output_service
from ..services.lab_adapter import LabAdapter

# Set up logger
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CommandSpec:
    """Registry entry: configuration model, adapter method and whether it runs an ensemble."""

    config_model: Type[BaseModel]
    tool: str
    description: str
    ensemble: bool = False


COMMANDS: Dict[str, CommandSpec] = {
    "analyze": CommandSpec(
        AnalyzeConfig,
        "analyze_tool",
        "Spectral profile of a mean matrix: lambda_H, classes, class eigenvectors, projection U, rho and nu_sec.",
    ),
    "simulate": CommandSpec(
        SimulateConfig,
        "simulate_tool",
        "One urn trajectory as CSV rows at the checkpoints, optionally with martingale diagnostics.",
    ),
    "embed": CommandSpec(
        EmbedConfig,
        "embed_tool",
        "Chi-square test of the branching embedding against the exact urn law, with optional long-run composition.",
    ),
    "verify-convergence": CommandSpec(
        VerifyConvergenceConfig,
        "verify_convergence_tool",
        "Ensemble distances of Y_n / n and N_n / n to the limit set at the final checkpoint.",
        ensemble=True,
    ),
    "verify-varpi": CommandSpec(
        VerifyVarpiConfig,
        "verify_varpi_tool",
        "Positivity, atoms and reference law of the class weights of a reducible urn.",
        ensemble=True,
    ),
    "verify-rate": CommandSpec(
        VerifyRateConfig,
        "verify_rate_tool",
        "Log-log slope of the mean distance to the limit set against the predicted rate exponent.",
        ensemble=True,
    ),
    "probe-divergence": CommandSpec(
        ProbeDivergenceConfig,
        "probe_divergence_tool",
        "Growth of the median normalized count of one color, compared with the analytic mean finiteness.",
        ensemble=True,
    ),
    "verify-drift": CommandSpec(
        VerifyDriftConfig,
        "verify_drift_tool",
        "Convergence under a non-homogeneous mean schedule, labeled by the drift conditions it satisfies.",
        ensemble=True,
    ),
}


def format_validation_errors(e: ValidationError) -> List[str]:
    """One "field.path: message" string per violated invariant."""
    messages = []
    for error in e.errors():
        location = ".".join(str(part) for part in error.get("loc", ()))
        messages.append(f"{location}: {error['msg']}" if location else error["msg"])
    return messages


def _read_config(path: str) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read configuration {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Configuration {path} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"Configuration {path} must hold a JSON object")
    return raw


def validate_config(path: str, command: str, master_seed: Optional[int] = None) -> BaseModel:
    """Loads a JSON configuration and validates it against the command's model.

    Defaults are filled during validation, so the returned model is the
    normalized configuration. A manifest seed replaces the file's master_seed.

    Args:
        path: JSON configuration file.
        command: Command whose model the file must satisfy.
        master_seed: Seed override from the manifest.

    Returns:
        BaseModel: The validated configuration.

    Raises:
        ConfigError: With every violated invariant in ``errors``.
    """
    if command not in COMMANDS:
        raise ConfigError(f"Unknown command: {command}")
    model = COMMANDS[command].config_model
    raw = _read_config(path)
    if master_seed is not None and "master_seed" in model.model_fields:
        raw["master_seed"] = master_seed
    try:
        config = model.model_validate(raw)
    except ValidationError as e:
        errors = format_validation_errors(e)
        raise ConfigError(f"Invalid configuration for {command}: {len(errors)} error(s)", errors) from e
    logger.debug(f"Validated {path} as {model.__name__}")
    return config


def normalized(config: BaseModel) -> Dict[str, Any]:
    """JSON-ready echo of a validated configuration, defaults included."""
    return config.model_dump(mode="json")


def _outputs_for(command: str, data: Dict[str, Any]) -> Tuple[Any, Optional[List[str]], Optional[List[List[Any]]]]:
    """JSON payload and CSV header/rows for a successful command."""
    if command == "analyze":
        profile = data["profile"]
        header = ["class", "component", "v", "u"]
        rows = [
            [j, k, profile["v_basis"][j][k], profile["u_basis"][j][k]]
            for j in range(profile["nu1"])
            for k in range(len(profile["v_basis"][j]))
        ]
        return data, header, rows
    if command == "simulate":
        return {"header": data["header"], "final": data["final"]}, data["header"], data["rows"]
    if "summary" in data:
        header, rows = output_service.summary_rows(data["summary"])
        return data, header, rows
    header, rows = output_service.verdict_rows(data.get("verdicts", []))
    return data, header, rows


async def run_command(adapter: LabAdapter, command: str, config: BaseModel, threads: int) -> Dict[str, Any]:
    """Calls the adapter method registered for ``command``."""
    spec = COMMANDS[command]
    tool = getattr(adapter, spec.tool)
    if spec.ensemble:
        return await tool(config, threads=threads or None)
    return await tool(config)


async def dispatch(manifest: RunManifest, adapter: Optional[LabAdapter] = None) -> CommandResult:
    """Validates the manifest's configuration, runs the command and writes its outputs.

    Configuration errors give exit code 64 and runtime errors 70; otherwise the
    exit code is the verdict outcome (0 for commands without verdicts).
    The manifest echo is written in every case once the output directory exists.
    """
    command = manifest.command
    target = manifest.validate_as if command == "validate" else command
    logger.info(f"Running {command} on {manifest.config_path}")

    config: Optional[BaseModel] = None
    try:
        if target is None or target == "validate":
            raise ConfigError("validate needs a target command (validate_as)")
        config = validate_config(manifest.config_path, target, manifest.master_seed)
    except ConfigError as e:
        logger.error(f"Configuration error for {command}: {e.errors}")
        _write_manifest(manifest, None, None)
        return CommandResult(
            is_error=True, output={"errors": e.errors}, error_message=str(e), exit_code=EXIT_CONFIG_ERROR
        )

    resolved_seed = getattr(config, "master_seed", None)
    echo = normalized(config)
    if command == "validate":
        _write_manifest(manifest, resolved_seed, echo)
        return CommandResult(output=echo, exit_code=EXIT_PASS)

    try:
        adapter = adapter or await get_lab_adapter()
        api_response = await run_command(adapter, command, config, manifest.threads)
        _write_manifest(manifest, resolved_seed, echo)
        if not api_response.get("success"):
            message = api_response.get("error_message", f"Unknown error from {command}.")
            return CommandResult(
                is_error=True,
                output={"error_code": api_response.get("error_code")},
                error_message=message,
                exit_code=EXIT_RUNTIME_ERROR,
            )
        data = api_response.get("data")
        payload, header, rows = _outputs_for(command, data)
        output_service.write_outputs(manifest.output_dir, command, manifest.format, payload, header, rows)
        exit_code = data.get("exit_code", EXIT_PASS)
        logger.info(f"{command} finished with exit code {exit_code}")
        return CommandResult(output=payload, exit_code=exit_code)
    except Exception as e:
        logger.error(f"Unexpected error processing command {command}: {e}", exc_info=True)
        return CommandResult(
            is_error=True,
            error_message=f"An unexpected error occurred while processing command {command}: {e}",
            exit_code=EXIT_RUNTIME_ERROR,
        )


def _write_manifest(manifest: RunManifest, resolved_seed: Optional[int], config: Optional[Dict[str, Any]]) -> None:
    try:
        directory = output_service.ensure_output_dir(manifest.output_dir)
        output_service.write_manifest(directory, manifest.model_dump(mode="json"), resolved_seed, config)
    except OSError as e:
        logger.error(f"Failed to write manifest to {manifest.output_dir}: {e}", exc_info=True)


def list_commands() -> List[Dict[str, Any]]:
    """Every command with its description and the JSON schema of its configuration."""
    return [
        {"name": name, "description": spec.description, "config_schema": spec.config_model.model_json_schema()}
        for name, spec in COMMANDS.items()
    ]
