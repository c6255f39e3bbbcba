"""Pydantic models for the command request and response envelope.

This module defines the structures exchanged between the command-line front
end and the command router:

1. RunManifest - which command to run, on which configuration, where to write
2. CommandResult - the command's output or error, with the process exit code

Every run writes its manifest (with the resolved seed) next to its outputs so
the run can be reproduced exactly.
"""

import uuid
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

CommandName = Literal[
    "analyze",
    "simulate",
    "embed",
    "verify-convergence",
    "verify-varpi",
    "verify-rate",
    "probe-divergence",
    "verify-drift",
    "validate",
]

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INCONCLUSIVE = 2
EXIT_CONFIG_ERROR = 64
EXIT_RUNTIME_ERROR = 70


class RunManifest(BaseModel):
    """Request model for one command run.

    Attributes:
        command: Name of the command to dispatch.
        config_path: JSON configuration file validated against the command's model.
        output_dir: Directory for outputs; created if absent.
        master_seed: Overrides the configuration's master_seed when given.
        threads: Worker cap for ensembles; 0 means available parallelism.
        format: Which output files to write.
        validate_as: Command whose configuration model ``validate`` checks against.
    """

    command: CommandName
    config_path: str
    output_dir: str
    validate_as: Optional[CommandName] = None
    master_seed: Optional[int] = Field(default=None, ge=0, le=(1 << 64) - 1)
    threads: int = Field(default=0, ge=0)
    format: Literal["json", "csv", "both"] = "both"

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "command": "analyze",
                "config_path": "configs/analyze_friedman.json",
                "output_dir": "runs/analyze",
                "master_seed": None,
                "threads": 0,
                "format": "both",
            }
        }
    )


class CommandResult(BaseModel):
    """Response model for one command run.

    Attributes:
        result_id: Unique identifier of this result, generated automatically.
        is_error: Whether the command failed before producing its output.
        output: Command output (profile, report or summary); None on error.
        error_message: Human-readable error; None on success.
        exit_code: Process exit code (0 pass, 1 fail, 2 inconclusive, 64 config error, 70 runtime error).
    """

    result_id: str = Field(default_factory=lambda: str(uuid.uuid4()))
    is_error: bool = False
    output: Optional[Any] = None
    error_message: Optional[str] = None
    exit_code: int = EXIT_PASS
