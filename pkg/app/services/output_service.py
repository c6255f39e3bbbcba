"""Persistence of command outputs.

This module writes everything a command produces into its output directory:

1. ``<command>.json`` - nested results (profile, report or ensemble summary)
2. ``<command>.csv`` - flat rows, comma separated, LF line endings, header row,
   floats with 17 significant digits
3. ``manifest.json`` - the manifest, the resolved seed and the normalized
   configuration, enough to reproduce the run exactly

numpy scalars and arrays are serialized through ``NumpyEncoder``.
"""

import csv
import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

# Set up logger
logger = logging.getLogger(__name__)


class NumpyEncoder(json.JSONEncoder):
    """JSON encoder for numpy scalars and arrays; non-finite floats become null."""

    def default(self, o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        return super().default(o)

    def iterencode(self, o, _one_shot=False):
        return super().iterencode(_finite(o), _one_shot)


def _finite(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def format_cell(value: Any) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if value is None:
        return ""
    return str(value)


def ensure_output_dir(output_dir: str) -> Path:
    path = Path(output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path: Path, payload: Any) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, cls=NumpyEncoder, indent=2)
        f.write("\n")
    logger.info(f"Wrote {path}")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, delimiter=",", lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
    logger.info(f"Wrote {path}")
    return path


def write_manifest(
    output_dir: Path, manifest: Dict[str, Any], resolved_seed: Optional[int], config: Optional[Dict[str, Any]]
) -> Path:
    """Echo of the manifest, the seed actually used and the normalized configuration."""
    echo = {
        "manifest": manifest,
        "resolved_seed": resolved_seed,
        "config": config,
        "written_at": datetime.now(timezone.utc).isoformat(),
    }
    return write_json(output_dir / "manifest.json", echo)


def write_outputs(
    output_dir: str,
    command: str,
    fmt: str,
    payload: Any,
    header: Optional[Sequence[str]] = None,
    rows: Optional[List[Sequence[Any]]] = None,
) -> List[Path]:
    """Writes ``<command>.json`` and/or ``<command>.csv`` according to the format flag."""
    directory = ensure_output_dir(output_dir)
    written: List[Path] = []
    if fmt in ("json", "both"):
        written.append(write_json(directory / f"{command}.json", payload))
    if fmt in ("csv", "both") and header is not None:
        written.append(write_csv(directory / f"{command}.csv", header, rows or []))
    return written


def verdict_rows(verdicts: List[Dict[str, Any]]) -> Tuple[List[str], List[List[Any]]]:
    """Flat rows (verdict, passed, metric, value) with scalar metrics only."""
    header = ["verdict", "passed", "metric", "value"]
    rows: List[List[Any]] = []
    for verdict in verdicts:
        passed = "inconclusive" if verdict["passed"] is None else verdict["passed"]
        scalars = {k: v for k, v in verdict.get("metrics", {}).items() if isinstance(v, (int, float, str))}
        if not scalars:
            rows.append([verdict["name"], passed, "", ""])
        for key, value in scalars.items():
            rows.append([verdict["name"], passed, key, value])
    return header, rows


def summary_rows(summary: Dict[str, Any]) -> Tuple[List[str], List[List[Any]]]:
    """Flat rows (n, statistic, component, value) from an ensemble summary dump."""
    header = ["n", "statistic", "component", "value"]
    rows: List[List[Any]] = []
    for stats in summary.get("checkpoints", []):
        n = stats["n"]
        for key, value in stats.items():
            if key == "n" or value is None:
                continue
            if isinstance(value, list):
                for k, v in enumerate(value):
                    rows.append([n, key, k + 1, v])
            else:
                rows.append([n, key, "", value])
    return header, rows
