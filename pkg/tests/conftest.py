"""Configuration file for pytest."""

import json

import numpy as np
import pytest

# This enables the asyncio fixture
pytest_plugins = ["pytest_asyncio"]


# Configure asyncio mode
def pytest_configure(config):
    config.addinivalue_line("markers", "asyncio: mark test as an asyncio coroutine")


@pytest.fixture
def rng():
    """Fixed-seed generator so Monte Carlo assertions are reproducible."""
    return np.random.default_rng(20240601)


@pytest.fixture
def write_config(tmp_path):
    """Writes a JSON configuration into tmp_path and returns its path as a string."""

    def _write(payload, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def friedman_policy_config():
    """Finite-support policy with mean [[5, 1], [1, 5]]."""
    return {
        "kind": "finite_discrete",
        "d": 2,
        "outcomes": [[[4, 2], [2, 4]], [[6, 0], [0, 6]]],
        "probs": [0.5, 0.5],
    }


@pytest.fixture
def polya_policy_config():
    return {"kind": "deterministic", "d": 2, "H": [[1, 0], [0, 1]]}
