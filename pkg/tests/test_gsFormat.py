"""Tests for the compact GS format and the GSSF codec."""

from pathlib import Path

import numpy as np
import pytest

from gs_sparse.enums import PatternFamily, TensorKind
from gs_sparse.gsFormat import (
    GsBsrMatrix,
    GsFormatError,
    decode,
    decodeArray,
    decodeGssf,
    encode,
    encodeGssf,
    groupMask,
    loadGssf,
    saveGssf,
    validateStructure,
)
from gs_sparse.patterns import flattenConv
from gs_sparse.pruner import GroupedMask, prunePattern
from gs_sparse.schemas import ConvGeometry, PatternDescriptor, ThresholdSpec

GOLDEN_ROW = bytes.fromhex(
    "47535346" "0100" "00" "0400" "0400" "00" "01000000" "10000000"
    "01000000"
    "00000000" "01000000"
    "04000000" "0d000000" "0e000000" "07000000"
    "0000803f" "00004040" "00008040" "00000040"
)


def gs(banks: int, k: int) -> PatternDescriptor:
    return PatternDescriptor(family=PatternFamily.GS_HYBRID, banks=banks, elemsPerRow=k)


@pytest.fixture
def denseRow() -> np.ndarray:
    w = np.zeros((1, 16), dtype=np.float32)
    w[0, [4, 7, 13, 14]] = [1.0, 2.0, 3.0, 4.0]
    return w


@pytest.fixture
def sparseRow(denseRow: np.ndarray) -> GsBsrMatrix:
    return encode(denseRow, groupMask(denseRow != 0, gs(4, 4)))


def masked(w: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, w, np.float32(0)).astype(np.float32)


class TestEncode:
    """Tests for packing grouped masks."""

    def test_single_group_row(self, sparseRow: GsBsrMatrix) -> None:
        # canonical order is by residue: 4, 13, 14, 7
        assert sparseRow.indices.tolist() == [[4, 13, 14, 7]]
        assert sparseRow.values.tolist() == [[1.0, 3.0, 4.0, 2.0]]
        assert sparseRow.indptr.tolist() == [0, 1]
        assert sorted(sparseRow.indices[0].tolist()) == [4, 7, 13, 14]

    def test_all_zero_matrix(self) -> None:
        w = np.zeros((8, 8), dtype=np.float32)
        g = encode(w, groupMask(w != 0, gs(4, 1)))
        assert g.groupCount == 0
        assert g.indptr.tolist() == [0, 0, 0]
        np.testing.assert_array_equal(decodeArray(g), w)

    def test_conv_offsets(self) -> None:
        geometry = ConvGeometry(
            outChannels=2, kernelH=2, kernelW=2, inChannels=4, actWidth=8, actChannels=4
        )
        flat = flattenConv(geometry)
        weights = np.zeros((2, 2, 2, 4), dtype=np.float32)
        for value, (y, x, c) in enumerate([(0, 0, 0), (0, 0, 3), (0, 1, 2), (1, 0, 1)], 1):
            weights[0, y, x, c] = value
        matrix = flat.flatten(weights)

        g = encode(matrix, groupMask(matrix != 0, gs(4, 4)), conv=geometry)
        assert g.tensorKind == TensorKind.CONV2D
        assert sorted(g.indices[0].tolist()) == [0, 3, 6, 33]
        np.testing.assert_array_equal(decodeArray(g), matrix)

    def test_conv_shape_must_match(self, denseRow: np.ndarray) -> None:
        geometry = ConvGeometry(
            outChannels=2, kernelH=2, kernelW=2, inChannels=4, actWidth=8, actChannels=4
        )
        with pytest.raises(GsFormatError, match="conv"):
            encode(denseRow, groupMask(denseRow != 0, gs(4, 4)), conv=geometry)

    def test_rejects_irregular(self, denseRow: np.ndarray) -> None:
        gm = GroupedMask(
            pattern=PatternDescriptor(family=PatternFamily.IRREGULAR),
            mask=denseRow != 0,
            groups=[],
        )
        with pytest.raises(GsFormatError, match="irregular"):
            encode(denseRow, gm)

    def test_rejects_repeated_residue(self) -> None:
        w = np.ones((1, 8), dtype=np.float32)
        pattern = gs(4, 4)
        gm = GroupedMask(
            pattern=pattern,
            mask=np.array([[1, 1, 1, 1, 1, 0, 0, 0]], dtype=bool),
            groups=[[(0, 0), (0, 1), (0, 2), (0, 4)]],
        )
        with pytest.raises(GsFormatError, match="repeats residue 0"):
            encode(w, gm)

    def test_rejects_short_group(self) -> None:
        w = np.ones((1, 8), dtype=np.float32)
        gm = GroupedMask(pattern=gs(4, 4), mask=w != 0, groups=[[(0, 0), (0, 1)]])
        with pytest.raises(GsFormatError, match="expected B=4"):
            encode(w, gm)


class TestRoundTrip:
    """Tests for decode(encode(w, gm)) == w masked."""

    @pytest.mark.parametrize(
        "spec",
        ["gs:B=4,k=4", "gs:B=8,k=8", "gs:B=4,k=1", "gs:B=8,k=2", "gs-scatter:B=4,k=2", "block:B=4,k=4"],
    )
    def test_pruned_matrices(self, rng: np.random.Generator, spec: str) -> None:
        for _ in range(5):
            w = rng.normal(size=(16, 64)).astype(np.float32)
            outcome = prunePattern(w, PatternDescriptor.fromSpec(spec), ThresholdSpec(sparsity=0.9))
            g = encode(w, outcome.grouped)
            np.testing.assert_array_equal(decodeArray(g), masked(w, outcome.mask))
            assert g.groupCount * g.banks == int(outcome.mask.sum())

    def test_decode_returns_tensor(self, denseRow: np.ndarray, sparseRow: GsBsrMatrix) -> None:
        t = decode(sparseRow)
        assert t.shape == (1, 16)
        np.testing.assert_array_equal(t.toArray(), denseRow)

    def test_scatter_keeps_original_rows(self, rng: np.random.Generator) -> None:
        w = rng.normal(size=(8, 64)).astype(np.float32)
        outcome = prunePattern(w, PatternDescriptor.fromSpec("gs-scatter:B=4,k=1"), ThresholdSpec(sparsity=0.9))
        g = encode(w, outcome.grouped)
        assert g.rowPerm is not None
        permuted = decodeArray(g)[g.rowPerm]
        np.testing.assert_array_equal(permuted, masked(w, outcome.mask)[g.rowPerm])


class TestGroupMask:
    """Tests for grouping bare masks."""

    def test_two_row_band(self) -> None:
        mask = np.array([[1, 0, 1, 0], [0, 1, 0, 1]], dtype=bool)
        gm = groupMask(mask, gs(2, 1))
        assert gm.groups == [[(0, 0), (1, 1)], [(0, 2), (1, 3)]]

    def test_dense_horizontal_row(self) -> None:
        gm = groupMask(np.ones((1, 8), dtype=bool), gs(4, 4))
        assert gm.groups == [
            [(0, 0), (0, 1), (0, 2), (0, 3)],
            [(0, 4), (0, 5), (0, 6), (0, 7)],
        ]

    @pytest.mark.parametrize("spec", ["gs:B=4,k=4", "gs:B=4,k=1", "gs:B=8,k=2", "gs:B=8,k=4"])
    def test_regroups_pruner_masks(self, rng: np.random.Generator, spec: str) -> None:
        w = rng.normal(size=(16, 64)).astype(np.float32)
        pattern = PatternDescriptor.fromSpec(spec)
        outcome = prunePattern(w, pattern, ThresholdSpec(sparsity=0.9))
        regrouped = groupMask(outcome.mask, pattern)
        assert regrouped.groupCount == outcome.groupCount
        g = encode(w, regrouped)
        np.testing.assert_array_equal(decodeArray(g), masked(w, outcome.mask))

    def test_rejects_invalid_mask(self) -> None:
        mask = np.zeros((1, 8), dtype=bool)
        mask[0, 0] = True
        with pytest.raises(GsFormatError, match="mask is not"):
            groupMask(mask, gs(4, 4))

    def test_scatter_needs_permutation(self) -> None:
        pattern = PatternDescriptor(family=PatternFamily.GS_SCATTER, banks=2, elemsPerRow=1)
        with pytest.raises(GsFormatError, match="permutation"):
            groupMask(np.zeros((2, 4), dtype=bool), pattern)

    def test_rejects_vertical_blocks(self) -> None:
        pattern = PatternDescriptor(family=PatternFamily.BLOCK, banks=4, elemsPerRow=2)
        with pytest.raises(GsFormatError, match="conflict-free"):
            groupMask(np.zeros((4, 8), dtype=bool), pattern)


class TestValidateStructure:
    """Tests for structural checks on GsBsrMatrix."""

    def test_indptr_end_mismatch(self, sparseRow: GsBsrMatrix) -> None:
        sparseRow.indptr = np.array([0, 2], dtype=np.uint32)
        with pytest.raises(GsFormatError, match="indptr"):
            validateStructure(sparseRow)

    def test_index_out_of_range(self, sparseRow: GsBsrMatrix) -> None:
        sparseRow.indices = np.array([[4, 13, 14, 19]], dtype=np.uint32)
        with pytest.raises(GsFormatError, match="indices"):
            validateStructure(sparseRow)

    def test_scatter_needs_row_perm(self, sparseRow: GsBsrMatrix) -> None:
        sparseRow.pattern = PatternDescriptor(family=PatternFamily.GS_SCATTER, banks=4, elemsPerRow=4)
        with pytest.raises(GsFormatError, match="row_perm"):
            validateStructure(sparseRow)

    def test_duplicate_coordinate(self) -> None:
        g = GsBsrMatrix(
            pattern=gs(4, 4),
            rows=1,
            cols=8,
            values=np.ones((2, 4), dtype=np.float32),
            indices=np.array([[0, 1, 2, 3], [0, 1, 2, 3]], dtype=np.uint32),
            indptr=np.array([0, 2], dtype=np.uint32),
        )
        with pytest.raises(GsFormatError, match="more than one group"):
            decodeArray(g)


class TestGssf:
    """Tests for the GSSF file codec."""

    def test_golden_bytes(self, sparseRow: GsBsrMatrix) -> None:
        assert encodeGssf(sparseRow) == GOLDEN_ROW
        assert decodeGssf(GOLDEN_ROW) == sparseRow

    @pytest.mark.parametrize("spec", ["gs:B=4,k=4", "gs:B=4,k=2", "gs-scatter:B=4,k=1", "block:B=4,k=4"])
    def test_round_trip(self, rng: np.random.Generator, spec: str) -> None:
        w = rng.normal(size=(8, 64)).astype(np.float32)
        outcome = prunePattern(w, PatternDescriptor.fromSpec(spec), ThresholdSpec(sparsity=0.9))
        g = encode(w, outcome.grouped)
        assert decodeGssf(encodeGssf(g)) == g

    def test_file_round_trip_corpus(self, rng: np.random.Generator, tempDir: Path) -> None:
        """encode -> save -> load -> decode gives w masked, bit for bit."""
        specs = ["gs:B=4,k=4", "gs:B=8,k=1", "gs:B=8,k=2", "gs-scatter:B=4,k=2", "block:B=8,k=8"]
        path = tempDir / "w.gssf"
        for case in range(100):
            pattern = PatternDescriptor.fromSpec(specs[case % len(specs)])
            rows = pattern.bandRows * int(rng.integers(1, 5))
            cols = pattern.banks * int(rng.integers(1, 9))
            w = rng.normal(size=(rows, cols)).astype(np.float32)
            sparsity = float(rng.choice([0.5, 0.8, 0.9]))
            outcome = prunePattern(w, pattern, ThresholdSpec(sparsity=sparsity))

            saveGssf(encode(w, outcome.grouped), path)
            restored = decodeArray(loadGssf(path))
            assert restored.tobytes() == masked(w, outcome.mask).tobytes()

    def test_conv_round_trip(self) -> None:
        geometry = ConvGeometry.fromFilterShape((2, 3, 4), actWidth=6)
        matrix = np.zeros((2, 12), dtype=np.float32)
        matrix[0, 0:4] = [1, 2, 3, 4]
        g = encode(matrix, groupMask(matrix != 0, gs(4, 4)), conv=geometry)
        restored = decodeGssf(encodeGssf(g))
        assert restored == g
        assert restored.tensorKind == TensorKind.CONV1D

    def test_truncated_indices(self) -> None:
        with pytest.raises(GsFormatError, match="indices truncated"):
            decodeGssf(GOLDEN_ROW[:40])

    def test_truncated_header(self) -> None:
        with pytest.raises(GsFormatError, match="header"):
            decodeGssf(GOLDEN_ROW[:10])

    def test_bad_magic(self) -> None:
        with pytest.raises(GsFormatError, match="magic"):
            decodeGssf(b"XXXX" + GOLDEN_ROW[4:])

    def test_bad_version(self) -> None:
        with pytest.raises(GsFormatError, match="version"):
            decodeGssf(GOLDEN_ROW[:4] + b"\x02\x00" + GOLDEN_ROW[6:])

    def test_trailing_bytes(self) -> None:
        with pytest.raises(GsFormatError, match="trailing"):
            decodeGssf(GOLDEN_ROW + b"\x00\x00")

    def test_duplicate_residue_rejected_on_load(self, tempDir: Path) -> None:
        # index 13 -> 12 gives residues 0, 0, 2, 3
        blob = bytearray(GOLDEN_ROW)
        blob[36] = 0x0C
        path = tempDir / "bad.gssf"
        path.write_bytes(bytes(blob))
        with pytest.raises(GsFormatError, match="repeats residue 0"):
            loadGssf(path)

    def test_save_and_load(self, tempDir: Path, sparseRow: GsBsrMatrix) -> None:
        path = tempDir / "w.gssf"
        saveGssf(sparseRow, path)
        assert path.read_bytes() == GOLDEN_ROW
        assert loadGssf(path) == sparseRow

    def test_load_error_names_path(self, tempDir: Path) -> None:
        path = tempDir / "short.gssf"
        path.write_bytes(GOLDEN_ROW[:30])
        with pytest.raises(GsFormatError, match="short.gssf"):
            loadGssf(path)
