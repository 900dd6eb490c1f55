"""Tests for configuration loading."""

import os
from pathlib import Path

import pytest

from gs_sparse.config import (
    getConfigSummary,
    loadConfig,
    loadDotenvConfig,
    loadEnvConfig,
    loadPyprojectConfig,
    mergeConfigs,
    parseParams,
)
from gs_sparse.enums import LogFormat


class TestLoadPyprojectConfig:
    """Tests for loading pyproject.toml configuration."""

    def test_nested_tables_are_flattened(self, mockProjectDir: Path) -> None:
        config = loadPyprojectConfig(mockProjectDir)

        assert config["log_level"] == "warning"
        assert config["gather_base_cycles"] == 4
        assert config["mac_cycles"] == 2

    def test_no_pyproject(self, tempDir: Path) -> None:
        """Test when pyproject.toml doesn't exist."""
        assert loadPyprojectConfig(tempDir) == {}

    def test_no_section(self, tempDir: Path) -> None:
        (tempDir / "pyproject.toml").write_text('[project]\nname = "test"\n')
        assert loadPyprojectConfig(tempDir) == {}

    def test_invalid_toml(self, tempDir: Path) -> None:
        """Test with invalid TOML file."""
        (tempDir / "pyproject.toml").write_text("invalid toml [[[")
        assert loadPyprojectConfig(tempDir) == {}


class TestLoadDotenvConfig:
    """Tests for loading .env configuration."""

    def test_load_env_file(self, mockEnvFile: Path) -> None:
        config = loadDotenvConfig(mockEnvFile.parent)

        assert config["gather_base_cycles"] == 5
        assert config["outer_overhead_cycles"] == 7
        assert config["log_format"] == LogFormat.JSON

    def test_no_env_file(self, tempDir: Path) -> None:
        """Test when .env doesn't exist."""
        assert loadDotenvConfig(tempDir) == {}

    def test_ignores_unknown_and_bad_values(self, tempDir: Path) -> None:
        (tempDir / ".env").write_text("GS_BANKS=many\nGS_COLOR=blue\nOTHER_BANKS=4\n")
        assert loadDotenvConfig(tempDir) == {}


class TestLoadEnvConfig:
    """Tests for loading environment variables."""

    def test_prefixed_values(self, cleanEnv: None) -> None:
        os.environ["GS_BANKS"] = "16"
        os.environ["GS_LOG_LEVEL"] = "debug"

        config = loadEnvConfig()

        assert config == {"banks": 16, "log_level": "debug"}

    def test_empty_environment(self, cleanEnv: None) -> None:
        assert loadEnvConfig() == {}


class TestParseParams:
    """Tests for key=value overrides."""

    def test_pairs_and_commas(self) -> None:
        params = parseParams(["mac_cycles=2,gather-base-cycles=4", "banks=16"])
        assert params == {"mac_cycles": 2, "gather_base_cycles": 4, "banks": 16}

    def test_none(self) -> None:
        assert parseParams(None) == {}

    @pytest.mark.parametrize(
        "pair,message",
        [("mac_cycles", "Malformed"), ("speed=3", "Unknown parameter"), ("mac_cycles=fast", "integer")],
    )
    def test_rejects(self, pair: str, message: str) -> None:
        with pytest.raises(ValueError, match=message):
            parseParams([pair])


class TestMergeConfigs:
    """Tests for configuration merging."""

    def test_later_wins(self) -> None:
        assert mergeConfigs({"banks": 4}, {"banks": 8}) == {"banks": 8}

    def test_none_does_not_override(self) -> None:
        assert mergeConfigs({"banks": 4}, {"banks": None}) == {"banks": 4}


class TestLoadConfig:
    """Tests for the merged configuration."""

    def test_defaults(self, tempDir: Path, cleanEnv: None) -> None:
        config = loadConfig(tempDir)

        assert config.tcm.banks == 8
        assert config.cost.macCycles == 1
        assert config.logLevel == "info"

    def test_priority_order(self, mockProjectDir: Path, mockEnvFile: Path, cleanEnv: None) -> None:
        """pyproject < .env < environment < CLI."""
        os.environ["GS_GATHER_BASE_CYCLES"] = "6"

        config = loadConfig(mockProjectDir, cliArgs={"outer_overhead_cycles": 9, "banks": None})

        assert config.tcm.gatherBaseCycles == 6
        assert config.cost.outerOverheadCycles == 9
        assert config.cost.macCycles == 2
        assert config.logFormat == LogFormat.JSON
        assert config.logLevel == "warning"
        assert config.tcm.banks == 8

    def test_invalid_value(self, tempDir: Path, cleanEnv: None) -> None:
        with pytest.raises(ValueError, match="Invalid configuration"):
            loadConfig(tempDir, cliArgs={"gather_base_cycles": 0})

    def test_summary_is_flat(self, tempDir: Path, cleanEnv: None) -> None:
        summary = getConfigSummary(loadConfig(tempDir))

        assert summary["banks"] == 8
        assert summary["gather_base_cycles"] == 3
        assert summary["reduction_cycles"] is None
        assert summary["log_format"] == "pretty"
