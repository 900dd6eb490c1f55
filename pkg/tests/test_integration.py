"""Integration tests for GS Sparse."""

import json
import os
from pathlib import Path

import numpy as np
import pytest
from typer.testing import CliRunner

from gs_sparse.cli import app
from gs_sparse.config import loadConfig
from gs_sparse.enums import PatternFamily
from gs_sparse.gsFormat import decodeArray, encode, loadGssf, saveGssf
from gs_sparse.kernels import KernelTrace, denseMatvec, spmv
from gs_sparse.patterns import validateBlockMask, validateGsMask, validateScatterMask
from gs_sparse.pruner import keptMagnitude, prunePattern
from gs_sparse.schemas import Distribution, PatternDescriptor, ThresholdSpec
from gs_sparse.tcmModel import accessReportFor, estimateCycles, traceCost, workloadFromMatrix
from gs_sparse.tensorIo import genTensor, loadTensor, saveTensor

runner = CliRunner()

GS_SPECS = ["gs:B=8,k=8", "gs:B=8,k=1", "gs:B=8,k=2", "gs:B=4,k=2", "gs-scatter:B=4,k=1", "block:B=8,k=8"]


@pytest.fixture
def weights() -> np.ndarray:
    return genTensor((16, 64), Distribution.fromSpec("gaussian:0,1"), seed=11).toArray()


class TestPrunePipeline:
    """Prune, validate, encode, store, reload and multiply."""

    @pytest.mark.parametrize("spec", GS_SPECS)
    def test_file_round_trip_matches_dense(self, weights: np.ndarray, tempDir: Path, spec: str) -> None:
        pattern = PatternDescriptor.fromSpec(spec)
        outcome = prunePattern(weights, pattern, ThresholdSpec(sparsity=0.95))

        if pattern.family == PatternFamily.GS_HYBRID:
            assert validateGsMask(outcome.mask, pattern).valid
        elif pattern.family == PatternFamily.GS_SCATTER:
            assert validateScatterMask(outcome.mask, pattern, outcome.grouped.rowPerm).valid
        else:
            assert validateBlockMask(outcome.mask, pattern).valid

        path = tempDir / "w.gssf"
        saveGssf(encode(weights, outcome.grouped), path)
        matrix = loadGssf(path)

        dense = decodeArray(matrix)
        np.testing.assert_array_equal(dense, np.where(outcome.mask, weights, 0.0))
        act = genTensor((64,), Distribution.fromSpec("uniform:-1,1"), seed=5).toArray()
        np.testing.assert_allclose(spmv(matrix, act), denseMatvec(dense, act), rtol=1e-5, atol=1e-5)

    def test_irregular_bounds_every_pattern(self, weights: np.ndarray) -> None:
        spec = ThresholdSpec(sparsity=0.95)
        irregular = prunePattern(weights, PatternDescriptor.fromSpec("irregular"), spec)
        best = keptMagnitude(weights, irregular.mask)
        kept = int(irregular.mask.sum())

        for text in GS_SPECS:
            outcome = prunePattern(weights, PatternDescriptor.fromSpec(text), spec)
            if int(outcome.mask.sum()) == kept:
                assert keptMagnitude(weights, outcome.mask) <= best + 1e-4


class TestCostPipeline:
    """Traces recorded by the kernels price the same as the encoded structure."""

    @pytest.mark.parametrize("spec", ["gs:B=8,k=8", "gs:B=8,k=1"])
    def test_trace_is_conflict_free(
        self, weights: np.ndarray, tempDir: Path, cleanEnv: None, spec: str
    ) -> None:
        outcome = prunePattern(weights, PatternDescriptor.fromSpec(spec), ThresholdSpec(sparsity=0.95))
        matrix = encode(weights, outcome.grouped)
        config = loadConfig(tempDir, cliArgs={"banks": 8})

        trace = KernelTrace(lanes=8)
        spmv(matrix, np.ones(64, dtype=np.float32), trace)

        fromTrace = traceCost(trace, config.tcm)
        fromMatrix = accessReportFor(matrix, config.tcm)
        assert fromTrace.serializedAccesses == fromTrace.idealAccesses == matrix.groupCount
        assert fromMatrix.serializedAccesses == fromTrace.serializedAccesses

        estimate = estimateCycles(workloadFromMatrix(matrix), config.tcm, config.cost)
        assert estimate.speedup > 1.0


class TestConfigurationPriority:
    """Integration tests for configuration priority."""

    def test_env_reaches_bench(self, tempDir: Path, cleanEnv: None, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.chdir(tempDir)
        args = ["--quiet", "bench", "--shape", "64x64", "-p", "gs:B=8,k=8", "--sparsity", "0.5", "--json"]
        base = json.loads(runner.invoke(app, args).stdout)

        os.environ["GS_MAC_CYCLES"] = "4"
        slower = json.loads(runner.invoke(app, args).stdout)

        assert slower["cycles"] > base["cycles"]
        assert slower["dense_cycles"] == base["dense_cycles"]

    def test_pyproject_section(self, mockProjectDir: Path, cleanEnv: None) -> None:
        config = loadConfig(mockProjectDir)

        assert config.tcm.gatherBaseCycles == 4
        assert config.cost.macCycles == 2


class TestCommandChain:
    """gen -> prune -> run -> decode through the CLI."""

    def test_chain(self, tempDir: Path, cleanEnv: None, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.chdir(tempDir)
        invoke = lambda *args: runner.invoke(app, ["--quiet", "--seed", "42", *args])  # noqa: E731

        assert invoke("gen", "-s", "32x64", "-d", "gaussian:0,1", "-o", "w.dtns").exit_code == 0
        assert invoke("gen", "-s", "4x64", "-o", "x.dtns").exit_code == 0
        result = invoke("prune", "-i", "w.dtns", "-p", "gs:B=8,k=2", "--sparsity", "0.9", "-o", "w.gssf", "--json")
        assert result.exit_code == 0, result.output
        assert json.loads(result.stdout)["realized_sparsity"] <= 0.9

        assert invoke("run", "spmv", "-w", "w.gssf", "-x", "x.dtns", "-o", "y.dtns").exit_code == 0
        assert invoke("decode", "-i", "w.gssf", "-o", "d.dtns").exit_code == 0

        dense = loadTensor(tempDir / "d.dtns").toArray()
        acts = loadTensor(tempDir / "x.dtns").toArray()
        expected = np.stack([denseMatvec(dense, a) for a in acts])
        np.testing.assert_allclose(loadTensor(tempDir / "y.dtns").toArray(), expected, rtol=1e-5, atol=1e-5)

        saveTensor(loadTensor(tempDir / "d.dtns"), tempDir / "copy.dtns")
        assert (tempDir / "copy.dtns").read_bytes() == (tempDir / "d.dtns").read_bytes()
