"""Matrix checks shared by the configuration models, and the spectral profile output.

Matrices travel as JSON arrays-of-arrays, row-major, with row k the source
color k. Indices are 0-based.
"""

import math
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field

MAX_COLORS = 64


def check_square(matrix: List[List[float]], name: str) -> List[List[float]]:
    """Rejects ragged, empty or oversized matrices."""
    d = len(matrix)
    if not 1 <= d <= MAX_COLORS:
        raise ValueError(f"{name} must have between 1 and {MAX_COLORS} rows, got {d}")
    for k, row in enumerate(matrix):
        if len(row) != d:
            raise ValueError(f"{name} must be square: row {k} has {len(row)} entries, expected {d}")
    return matrix


def check_finite(matrix: List[List[float]], name: str) -> List[List[float]]:
    for k, row in enumerate(matrix):
        for q, value in enumerate(row):
            if not math.isfinite(value):
                raise ValueError(f"{name}[{k}][{q}] is not finite")
    return matrix


def check_nonnegative_off_diagonal(matrix: List[List[float]], name: str) -> List[List[float]]:
    for k, row in enumerate(matrix):
        for q, value in enumerate(row):
            if k != q and value < 0:
                raise ValueError(
                    f"{name}[{k}][{q}] = {value} is negative; the nonnegative off-diagonal condition requires every "
                    "entry off the diagonal to be >= 0"
                )
    return matrix


class SpectralProfileModel(BaseModel):
    """JSON view of a spectral profile, as written by the analyze command."""

    lambda_h: float = Field(description="Largest real part of the eigenvalues of H.")
    classes: List[List[int]] = Field(description="Irreducible classes in topological order of the condensation.")
    nu1: int = Field(ge=1, description="Number of classes attaining lambda_h.")
    v_basis: List[List[float]] = Field(description="Left eigenvectors v_j, each summing to 1.")
    u_basis: List[List[float]] = Field(description="Right eigenvectors u_j, normalized so v_j . u_j = 1.")
    u_projection: List[List[float]] = Field(description="Projection U = sum_j u_j^t v_j.")
    rho: Optional[float] = Field(
        default=None, description="Second largest real part over lambda_h; null without secondary spectrum."
    )
    nu_sec: int = Field(default=1, ge=1, description="Largest Jordan block size at the second largest real part.")
    irreducible: bool = Field(description="Whether the structure digraph is strongly connected.")

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "lambda_h": 6.0,
                "classes": [[0, 1]],
                "nu1": 1,
                "v_basis": [[0.5, 0.5]],
                "u_basis": [[1.0, 1.0]],
                "u_projection": [[0.5, 0.5], [0.5, 0.5]],
                "rho": 0.6666666666666666,
                "nu_sec": 1,
                "irreducible": True,
            }
        }
    )
