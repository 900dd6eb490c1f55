"""Pytest configuration and fixtures for GS Sparse tests."""

import os
import tempfile
from pathlib import Path
from typing import Generator

import numpy as np
import pytest
from loguru import logger


@pytest.fixture
def tempDir() -> Generator[Path, None, None]:
    """Create a temporary directory for tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for test data."""
    return np.random.default_rng(1234)


@pytest.fixture
def mockProjectDir(tempDir: Path) -> Path:
    """Project directory with a [tool.gs-sparse] section."""
    pyprojectPath = tempDir / "pyproject.toml"
    pyprojectPath.write_text("""
[project]
name = "test-project"
version = "0.1.0"

[tool.gs-sparse]
log_level = "warning"

[tool.gs-sparse.tcm]
gather_base_cycles = 4

[tool.gs-sparse.cost]
mac_cycles = 2
""")
    return tempDir


@pytest.fixture
def mockEnvFile(tempDir: Path) -> Path:
    """Create a mock .env file."""
    envPath = tempDir / ".env"
    envPath.write_text("""
GS_GATHER_BASE_CYCLES=5
GS_OUTER_OVERHEAD_CYCLES=7
GS_LOG_FORMAT=json
""")
    return envPath


@pytest.fixture
def cleanEnv() -> Generator[None, None, None]:
    """Remove GS_ prefixed variables for the duration of a test."""
    envPrefixes = ("GS_",)

    originalEnv = {k: v for k, v in os.environ.items() if k.startswith(envPrefixes)}
    for key in originalEnv:
        del os.environ[key]

    yield

    for key in list(os.environ.keys()):
        if key.startswith(envPrefixes):
            del os.environ[key]
    os.environ.update(originalEnv)


@pytest.fixture(autouse=True)
def resetLogging() -> Generator[None, None, None]:
    """Keep loguru sinks from leaking between tests."""
    yield
    logger.remove()
