#!/usr/bin/env python
"""
Generate JSON schemas for the urn lab command configurations.

This script writes one schema per command, built from the pydantic models
the router validates against, plus a combined file listing every command.
"""

import json
import os
import sys
from typing import Any, Dict

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.models.protocol import CommandResult, RunManifest  # noqa: E402
from app.routers.commands import list_commands  # noqa: E402

SCHEMA_DIR = "tools/schemas"


def create_command_schema(entry: Dict[str, Any]) -> Dict[str, Any]:
    """Create a standardized command schema with the run envelope attached."""
    return {
        "name": entry["name"],
        "description": entry["description"],
        "config_schema": entry["config_schema"],
        "manifest_schema": RunManifest.model_json_schema(),
        "result_schema": CommandResult.model_json_schema(),
    }


def main() -> None:
    os.makedirs(SCHEMA_DIR, exist_ok=True)
    all_schemas = [create_command_schema(entry) for entry in list_commands()]

    for schema in all_schemas:
        filename = f"{SCHEMA_DIR}/{schema['name']}.json"
        with open(filename, "w") as f:
            json.dump(schema, f, indent=2)
        print(f"Created schema: {filename}")

    with open(f"{SCHEMA_DIR}/all_commands.json", "w") as f:
        json.dump(all_schemas, f, indent=2)
    print(f"Created combined schema: {SCHEMA_DIR}/all_commands.json")

    print(f"Successfully generated {len(all_schemas)} command schemas")


if __name__ == "__main__":
    main()
