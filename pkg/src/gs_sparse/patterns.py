"""Residue arithmetic, GS/block mask validation and conv-filter flattening."""

from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .enums import PatternFamily
from .schemas import ConvGeometry, PatternDescriptor


class PatternError(ValueError):
    """Raised when a pattern precondition does not hold."""

    pass


@dataclass
class ValidationReport:
    """Outcome of a mask or format validation."""

    valid: bool
    detail: str = ""
    band: Optional[int] = None
    row: Optional[int] = None
    residue: Optional[int] = None
    residueHistogram: list[int] = field(default_factory=list)

    @classmethod
    def ok(cls, residueHistogram: Optional[list[int]] = None) -> "ValidationReport":
        return cls(valid=True, residueHistogram=residueHistogram or [])


def residues(cols: Sequence[int], banks: int) -> list[int]:
    """Column indices reduced mod B, order preserved."""
    if banks < 1:
        raise PatternError(f"banks must be >= 1, got {banks}")
    return [int(c) % banks for c in cols]


def toMask(bits: Any) -> np.ndarray:
    """2-D boolean mask from a {0,1} array-like."""
    arr = np.asarray(bits)
    if arr.ndim != 2:
        raise PatternError(f"mask must be 2-D, got shape {arr.shape}")
    if arr.dtype != np.bool_:
        if not np.isin(arr, (0, 1)).all():
            raise PatternError("mask values must be 0 or 1")
        arr = arr.astype(bool)
    return arr


def residueHistogram(mask: np.ndarray, banks: int) -> list[int]:
    """Non-zero count per column residue over the whole mask."""
    mask = toMask(mask)
    colCounts = mask.sum(axis=0)
    hist = np.bincount(np.arange(mask.shape[1]) % banks, weights=colCounts, minlength=banks)
    return [int(v) for v in hist]


def _checkBandDivisible(rows: int, pattern: PatternDescriptor) -> None:
    if rows % pattern.bandRows:
        raise PatternError(
            f"m={rows} is not divisible by B/k={pattern.bandRows}; pad rows explicitly"
        )


def validateGsMask(mask: Any, pattern: PatternDescriptor) -> ValidationReport:
    """
    Check GS(B,k) on every band of B/k consecutive rows.

    A band with N non-zeros is valid when each row holds Nk/B of them and
    each residue class mod B holds N/B of them.
    """
    if pattern.family != PatternFamily.GS_HYBRID:
        raise PatternError(f"validateGsMask expects a gs pattern, got {pattern.family.value}")
    mask = toMask(mask)
    rows, cols = mask.shape
    _checkBandDivisible(rows, pattern)

    banks, k, bandRows = pattern.banks, pattern.elemsPerRow, pattern.bandRows
    colResidues = np.arange(cols) % banks
    hist = residueHistogram(mask, banks)

    for band in range(rows // bandRows):
        start = band * bandRows
        bandMask = mask[start : start + bandRows]
        rowCounts = bandMask.sum(axis=1)
        total = int(rowCounts.sum())

        for local, count in enumerate(rowCounts):
            if int(count) * banks != total * k:
                return ValidationReport(
                    valid=False,
                    detail=(
                        f"band {band} row {start + local}: {int(count)} non-zeros, "
                        f"expected N*k/B = {total}*{k}/{banks}"
                    ),
                    band=band,
                    row=start + local,
                    residueHistogram=hist,
                )

        residueCounts = np.bincount(colResidues, weights=bandMask.sum(axis=0), minlength=banks)
        for residue, count in enumerate(residueCounts):
            if int(count) * banks != total:
                return ValidationReport(
                    valid=False,
                    detail=(
                        f"band {band} residue {residue}: {int(count)} non-zeros, "
                        f"expected N/B = {total}/{banks}"
                    ),
                    band=band,
                    residue=residue,
                    residueHistogram=hist,
                )

    return ValidationReport.ok(hist)


def checkPermutation(rowPerm: Sequence[int], rows: int) -> np.ndarray:
    """Validate that rowPerm is a bijection on 0..rows-1."""
    perm = np.asarray(rowPerm, dtype=np.int64)
    if perm.shape != (rows,) or not np.array_equal(np.sort(perm), np.arange(rows)):
        raise PatternError(f"row permutation is not a bijection on 0..{rows - 1}")
    return perm


def validateScatterMask(
    mask: Any, pattern: PatternDescriptor, rowPerm: Sequence[int]
) -> ValidationReport:
    """
    Check GS_scatter(B,k): the row-permuted mask must satisfy GS(B,k).

    Position i of the permuted mask holds original row rowPerm[i]; reported
    rows are original row indices.
    """
    mask = toMask(mask)
    perm = checkPermutation(rowPerm, mask.shape[0])
    report = validateGsMask(mask[perm], pattern.asHybrid())
    if report.row is not None:
        report.row = int(perm[report.row])
    return report


def validateBlockMask(mask: Any, pattern: PatternDescriptor) -> ValidationReport:
    """Check that the mask is a union of grid-aligned (B/k)×k all-ones blocks."""
    if pattern.family != PatternFamily.BLOCK:
        raise PatternError(f"validateBlockMask expects a block pattern, got {pattern.family.value}")
    mask = toMask(mask)
    rows, cols = mask.shape
    blockH, blockW = pattern.bandRows, pattern.elemsPerRow
    if rows % blockH or cols % blockW:
        raise PatternError(
            f"mask {rows}x{cols} is not divisible into {blockH}x{blockW} blocks"
        )

    blockSums = mask.reshape(rows // blockH, blockH, cols // blockW, blockW).sum(axis=(1, 3))
    partial = np.argwhere((blockSums != 0) & (blockSums != pattern.banks))
    hist = residueHistogram(mask, pattern.banks)
    if len(partial):
        blockRow, blockCol = (int(v) for v in partial[0])
        return ValidationReport(
            valid=False,
            detail=(
                f"block ({blockRow}, {blockCol}) is partially filled: "
                f"{int(blockSums[blockRow, blockCol])} of {pattern.banks}"
            ),
            band=blockRow,
            row=blockRow * blockH,
            residueHistogram=hist,
        )
    return ValidationReport.ok(hist)


@dataclass(frozen=True)
class ConvFlattening:
    """
    Bijection between filter coordinates and the flattened O×(hwI) matrix.

    OLI filters use y == 0 and x == ℓ.
    """

    geometry: ConvGeometry

    @property
    def rows(self) -> int:
        return self.geometry.outChannels

    @property
    def cols(self) -> int:
        return self.geometry.flatCols

    def _checkTap(self, y: int, x: int, c: int) -> None:
        g = self.geometry
        if not (0 <= y < g.kernelH and 0 <= x < g.kernelW and 0 <= c < g.inChannels):
            raise PatternError(
                f"filter tap (y={y}, x={x}, c={c}) outside "
                f"{g.kernelH}x{g.kernelW}x{g.inChannels}"
            )

    def toColumn(self, y: int, x: int, c: int) -> int:
        self._checkTap(y, x, c)
        g = self.geometry
        return (y * g.kernelW + x) * g.inChannels + c

    def fromColumn(self, col: int) -> tuple[int, int, int]:
        g = self.geometry
        if not 0 <= col < self.cols:
            raise PatternError(f"column {col} outside 0..{self.cols - 1}")
        pixel, c = divmod(col, g.inChannels)
        y, x = divmod(pixel, g.kernelW)
        return y, x, c

    def toMatrixCoord(self, o: int, y: int, x: int, c: int) -> tuple[int, int]:
        if not 0 <= o < self.rows:
            raise PatternError(f"output channel {o} outside 0..{self.rows - 1}")
        return o, self.toColumn(y, x, c)

    def fromMatrixCoord(self, row: int, col: int) -> tuple[int, int, int, int]:
        if not 0 <= row < self.rows:
            raise PatternError(f"row {row} outside 0..{self.rows - 1}")
        return (row, *self.fromColumn(col))

    def flatten(self, weights: np.ndarray) -> np.ndarray:
        """Filter tensor (O,h,w,I) or (O,L,I) to its O×(hwI) view."""
        weights = np.asarray(weights)
        if weights.shape != self.geometry.filterShape:
            raise PatternError(
                f"filter shape {weights.shape} does not match {self.geometry.filterShape}"
            )
        return weights.reshape(self.rows, self.cols)

    def unflatten(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix)
        if matrix.shape != (self.rows, self.cols):
            raise PatternError(f"matrix shape {matrix.shape} is not {(self.rows, self.cols)}")
        return matrix.reshape(self.geometry.filterShape)


def flattenConv(geometry: ConvGeometry) -> ConvFlattening:
    """Flattening map (o,y,x,c) ↔ (o, (y·w + x)·I + c) for a filter geometry."""
    return ConvFlattening(geometry)


def convActivationOffset(y: int, x: int, c: int, geometry: ConvGeometry) -> int:
    """
    NHWC offset of the activation met by filter tap (y,x,c), relative to the
    sliding-window origin: y·W_act·C + x·C + c.
    """
    flattenConv(geometry)._checkTap(y, x, c)
    return (y * geometry.actWidth + x) * geometry.actChannels + c


def columnToOffset(col: int, geometry: ConvGeometry) -> int:
    y, x, c = flattenConv(geometry).fromColumn(col)
    return convActivationOffset(y, x, c, geometry)


def offsetToColumn(offset: int, geometry: ConvGeometry) -> int:
    """Inverse of columnToOffset; rejects offsets that hit no filter tap."""
    rowStride = geometry.actWidth * geometry.actChannels
    y, rem = divmod(int(offset), rowStride)
    x, c = divmod(rem, geometry.actChannels)
    if offset < 0 or y >= geometry.kernelH or x >= geometry.kernelW:
        raise PatternError(f"offset {offset} does not address a filter tap")
    return flattenConv(geometry).toColumn(y, x, c)


def describePattern(pattern: PatternDescriptor) -> str:
    """Human label such as 'GS(8,1) vertical'."""
    if pattern.family == PatternFamily.IRREGULAR:
        return "irregular"
    name = {
        PatternFamily.GS_HYBRID: "GS",
        PatternFamily.GS_SCATTER: "GS_scatter",
        PatternFamily.BLOCK: "Block",
    }[pattern.family]
    if pattern.isHorizontal:
        shape = "horizontal"
    elif pattern.isVertical:
        shape = "vertical"
    else:
        shape = "hybrid"
    return f"{name}({pattern.banks},{pattern.elemsPerRow}) {shape}"
