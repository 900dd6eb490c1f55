"""Compact GS format: value/index/indptr tables and the GSSF file codec.

Each group is one row of B values and one row of B unsigned indices.
indptr counts groups per band of B/k rows, like BSR. Element j of a group
belongs to local band row j // k; within a group, entries are ordered by
(local row, residue).

GSSF layout (little-endian): magic "GSSF" · version u16 · family u8 · B u16 ·
k u16 · tensor kind u8 · m u32 · n u32 · [conv: O,h,w,I,W_act,C u32] ·
group_count u32 · indptr · indices · values f32 · [scatter: row_perm].
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from loguru import logger

from .enums import ConvLayout, PatternFamily, TensorKind
from .patterns import (
    PatternError,
    checkPermutation,
    toMask,
    validateBlockMask,
    validateGsMask,
    validateScatterMask,
)
from .pruner import GroupedMask, blockGroups, matchBand
from .schemas import ConvGeometry, PatternDescriptor
from .tensorIo import DenseTensor, asFloatArray, writeAtomic

GSSF_MAGIC = b"GSSF"
GSSF_VERSION = 1
_HEADER = struct.Struct("<4sHBHHBII")
_CONV = struct.Struct("<6I")
_U32 = struct.Struct("<I")


class GsFormatError(ValueError):
    """Raised for invalid GS-format matrices or GSSF files."""

    pass


@dataclass(eq=False)
class GsBsrMatrix:
    """Compact GS matrix, optionally bound to a convolution geometry."""

    pattern: PatternDescriptor
    rows: int
    cols: int
    values: np.ndarray
    indices: np.ndarray
    indptr: np.ndarray
    conv: Optional[ConvGeometry] = None
    rowPerm: Optional[np.ndarray] = None

    @property
    def banks(self) -> int:
        return self.pattern.banks

    @property
    def groupCount(self) -> int:
        return int(self.values.shape[0])

    @property
    def bandCount(self) -> int:
        return self.rows // self.pattern.bandRows

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.values))

    @property
    def tensorKind(self) -> TensorKind:
        return self.conv.tensorKind if self.conv else TensorKind.MATRIX

    def groupBands(self) -> np.ndarray:
        """Band index of every group."""
        return np.repeat(np.arange(self.bandCount), np.diff(self.indptr.astype(np.int64)))

    def groupRows(self) -> np.ndarray:
        """(G, B) original row of every stored element."""
        bandRows, k = self.pattern.bandRows, self.pattern.elemsPerRow
        lanes = np.arange(self.banks) // k
        positions = self.groupBands()[:, None] * bandRows + lanes[None, :]
        if self.rowPerm is not None:
            return self.rowPerm[positions]
        return positions

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GsBsrMatrix):
            return NotImplemented
        return (
            self.pattern == other.pattern
            and (self.rows, self.cols) == (other.rows, other.cols)
            and self.conv == other.conv
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and self.values.tobytes() == other.values.tobytes()
            and _samePerm(self.rowPerm, other.rowPerm)
        )


def _samePerm(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


def _checkEncodable(pattern: PatternDescriptor) -> None:
    if pattern.family == PatternFamily.IRREGULAR:
        raise GsFormatError("irregular masks have no GS encoding")
    if pattern.family == PatternFamily.BLOCK and not pattern.isHorizontal:
        raise GsFormatError(
            f"Block({pattern.banks},{pattern.elemsPerRow}) groups are not conflict-free; "
            "only Block(B,B) can be stored"
        )


def _checkConv(conv: ConvGeometry, rows: int, cols: int) -> None:
    if conv.outChannels != rows or conv.flatCols != cols:
        raise GsFormatError(
            f"conv: geometry {conv.filterShape} does not flatten to {rows}x{cols}"
        )


def _offsetColumns(indices: np.ndarray, conv: ConvGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Flattened columns for activation offsets, plus a validity mask."""
    rowStride = conv.actWidth * conv.actChannels
    y, rem = np.divmod(indices.astype(np.int64), rowStride)
    x, c = np.divmod(rem, conv.actChannels)
    valid = (y < conv.kernelH) & (x < conv.kernelW)
    return (y * conv.kernelW + x) * conv.inChannels + c, valid


def _columnOffsets(cols: np.ndarray, conv: ConvGeometry) -> np.ndarray:
    pixel, c = np.divmod(cols.astype(np.int64), conv.inChannels)
    y, x = np.divmod(pixel, conv.kernelW)
    return (y * conv.actWidth + x) * conv.actChannels + c


def encode(w: Any, gm: GroupedMask, conv: Optional[ConvGeometry] = None) -> GsBsrMatrix:
    """
    Pack the weights selected by `gm` into values/indices/indptr.

    Groups keep their order; each is re-sorted into canonical (local row,
    residue) order. With a conv geometry, columns become activation offsets.
    """
    w = asFloatArray(w)
    pattern = gm.pattern
    _checkEncodable(pattern)
    if w.ndim != 2 or w.shape != gm.mask.shape:
        raise GsFormatError(f"weights {w.shape} do not match mask {gm.mask.shape}")
    rows, cols = w.shape
    banks, k, bandRows = pattern.banks, pattern.elemsPerRow, pattern.bandRows
    if rows % bandRows:
        raise GsFormatError(f"m={rows} is not divisible by B/k={bandRows}")
    if conv is not None:
        _checkConv(conv, rows, cols)

    positions = gm.rowPositions()
    groupCount = len(gm.groups)
    groupRows = np.zeros((groupCount, banks), dtype=np.int64)
    groupCols = np.zeros((groupCount, banks), dtype=np.int64)
    bands = np.zeros(groupCount, dtype=np.int64)
    for g, group in enumerate(gm.groups):
        if len(group) != banks:
            raise GsFormatError(f"group {g}: {len(group)} entries, expected B={banks}")
        ordered = sorted(group, key=lambda rc: (positions[rc[0]], rc[1] % banks))
        groupBands = {int(positions[r]) // bandRows for r, _ in ordered}
        if len(groupBands) != 1:
            raise GsFormatError(f"group {g}: spans bands {sorted(groupBands)}")
        bands[g] = groupBands.pop()
        locals_ = [int(positions[r]) % bandRows for r, _ in ordered]
        if locals_ != [j // k for j in range(banks)]:
            raise GsFormatError(f"group {g}: rows do not hold k={k} entries each")
        groupRows[g] = [r for r, _ in ordered]
        groupCols[g] = [c for _, c in ordered]

    if groupCount and np.any(np.diff(bands) < 0):
        raise GsFormatError("groups are not in band order")
    if np.any((groupCols < 0) | (groupCols >= cols)):
        raise GsFormatError("group column out of range")

    indices = groupCols if conv is None else _columnOffsets(groupCols, conv)
    _checkResidues(indices, banks)

    bandCount = rows // bandRows
    indptr = np.zeros(bandCount + 1, dtype=np.uint32)
    indptr[1:] = np.cumsum(np.bincount(bands, minlength=bandCount))

    matrix = GsBsrMatrix(
        pattern=pattern,
        rows=rows,
        cols=cols,
        values=w[groupRows, groupCols].astype(np.float32).reshape(groupCount, banks),
        indices=indices.astype(np.uint32).reshape(groupCount, banks),
        indptr=indptr,
        conv=conv,
        rowPerm=None if gm.rowPerm is None else np.asarray(gm.rowPerm, dtype=np.int64),
    )
    logger.debug("Encoded | groups={} bands={} conv={}", groupCount, bandCount, conv is not None)
    return matrix


def _checkResidues(indices: np.ndarray, banks: int) -> None:
    """Every group's indices must cover each residue mod B exactly once."""
    if indices.size == 0:
        return
    sortedResidues = np.sort(indices.astype(np.int64) % banks, axis=1)
    bad = np.flatnonzero(np.any(sortedResidues != np.arange(banks), axis=1))
    if len(bad):
        g = int(bad[0])
        residuesOf = sortedResidues[g]
        dup = int(residuesOf[np.flatnonzero(np.diff(residuesOf) == 0)[0]])
        raise GsFormatError(f"indices: group {g} repeats residue {dup} mod {banks}")


def validateStructure(g: GsBsrMatrix) -> None:
    """Raise GsFormatError naming the first field that breaks an invariant."""
    _checkEncodable(g.pattern)
    banks, bandRows = g.banks, g.pattern.bandRows
    if g.rows < 1 or g.cols < 1:
        raise GsFormatError(f"header: extents must be positive, got {g.rows}x{g.cols}")
    if g.rows % bandRows:
        raise GsFormatError(f"header: m={g.rows} is not divisible by B/k={bandRows}")
    if g.conv is not None:
        _checkConv(g.conv, g.rows, g.cols)

    indptr = np.asarray(g.indptr, dtype=np.int64)
    if indptr.shape != (g.bandCount + 1,):
        raise GsFormatError(f"indptr: length {len(indptr)}, expected {g.bandCount + 1}")
    if indptr[0] != 0 or np.any(np.diff(indptr) < 0):
        raise GsFormatError("indptr: must start at 0 and be non-decreasing")
    if indptr[-1] != g.groupCount:
        raise GsFormatError(f"indptr: ends at {indptr[-1]}, group count is {g.groupCount}")
    if g.indices.shape != (g.groupCount, banks):
        raise GsFormatError(f"indices: shape {g.indices.shape}, expected {(g.groupCount, banks)}")
    if g.values.shape != (g.groupCount, banks):
        raise GsFormatError(f"values: shape {g.values.shape}, expected {(g.groupCount, banks)}")

    _checkResidues(g.indices, banks)
    if g.conv is None:
        if g.indices.size and int(g.indices.max()) >= g.cols:
            raise GsFormatError(f"indices: column {int(g.indices.max())} >= n={g.cols}")
    else:
        _, valid = _offsetColumns(g.indices, g.conv)
        if not valid.all():
            bad = tuple(int(v) for v in np.argwhere(~valid)[0])
            raise GsFormatError(
                f"indices: offset {int(g.indices[bad])} in group {bad[0]} hits no filter tap"
            )

    if g.pattern.family == PatternFamily.GS_SCATTER:
        if g.rowPerm is None:
            raise GsFormatError("row_perm: missing for a scatter matrix")
        try:
            checkPermutation(g.rowPerm, g.rows)
        except PatternError as e:
            raise GsFormatError(f"row_perm: {e}") from None
    elif g.rowPerm is not None:
        raise GsFormatError(f"row_perm: not allowed for {g.pattern.family.value}")


def decodeArray(g: GsBsrMatrix) -> np.ndarray:
    """Dense m×n float32 array of the stored weights, original row order."""
    validateStructure(g)
    dense = np.zeros((g.rows, g.cols), dtype=np.float32)
    if g.groupCount == 0:
        return dense
    rows = g.groupRows()
    cols = g.indices.astype(np.int64) if g.conv is None else _offsetColumns(g.indices, g.conv)[0]
    keys = rows.ravel() * g.cols + cols.ravel()
    if len(np.unique(keys)) != keys.size:
        raise GsFormatError("indices: a coordinate is stored by more than one group")
    dense[rows, cols] = g.values
    return dense


def decode(g: GsBsrMatrix) -> DenseTensor:
    """Dense masked weights as a tensor; conv offsets and row_perm are inverted."""
    return DenseTensor.fromArray(decodeArray(g))


def groupMask(
    mask: Any, pattern: PatternDescriptor, rowPerm: Optional[Sequence[int]] = None
) -> GroupedMask:
    """
    Partition a valid mask into conflict-free groups.

    Horizontal masks zip each row's residue buckets (columns ascending);
    vertical and hybrid bands are split by bipartite matching. Block(B,B)
    masks yield one group per block.
    """
    mask = toMask(mask)
    _checkEncodable(pattern)
    banks, k, bandRows = pattern.banks, pattern.elemsPerRow, pattern.bandRows

    if pattern.family == PatternFamily.BLOCK:
        report = validateBlockMask(mask, pattern)
        if not report.valid:
            raise GsFormatError(f"mask is not {pattern.toSpec()}: {report.detail}")
        return GroupedMask(pattern=pattern, mask=mask, groups=blockGroups(mask, banks))

    perm: Optional[np.ndarray] = None
    if pattern.family == PatternFamily.GS_SCATTER:
        if rowPerm is None:
            raise GsFormatError("scatter masks need a row permutation")
        report = validateScatterMask(mask, pattern, rowPerm)
        perm = checkPermutation(rowPerm, mask.shape[0])
    else:
        report = validateGsMask(mask, pattern)
    if not report.valid:
        raise GsFormatError(f"mask is not {pattern.toSpec()}: {report.detail}")

    ordered = mask if perm is None else mask[perm]
    original = np.arange(mask.shape[0]) if perm is None else perm
    groups: list[list[tuple[int, int]]] = []
    if pattern.isHorizontal:
        for row in range(ordered.shape[0]):
            cols = np.flatnonzero(ordered[row])
            buckets = [cols[cols % banks == b] for b in range(banks)]
            for g in range(len(cols) // banks):
                groups.append([(int(original[row]), int(buckets[b][g])) for b in range(banks)])
    else:
        for band in range(ordered.shape[0] // bandRows):
            start = band * bandRows
            for group in matchBand(ordered[start : start + bandRows], banks, k, band):
                groups.append([(int(original[start + r]), col) for r, col in group])

    return GroupedMask(pattern=pattern, mask=mask, groups=groups, rowPerm=perm)


def encodeGssf(g: GsBsrMatrix) -> bytes:
    """Serialize a GS matrix to GSSF bytes."""
    validateStructure(g)
    parts = [
        _HEADER.pack(
            GSSF_MAGIC,
            GSSF_VERSION,
            g.pattern.family.fileCode,
            g.banks,
            g.pattern.elemsPerRow,
            g.tensorKind.fileCode,
            g.rows,
            g.cols,
        )
    ]
    if g.conv is not None:
        c = g.conv
        parts.append(
            _CONV.pack(c.outChannels, c.kernelH, c.kernelW, c.inChannels, c.actWidth, c.actChannels)
        )
    parts.append(_U32.pack(g.groupCount))
    parts.append(np.asarray(g.indptr, dtype="<u4").tobytes())
    parts.append(np.asarray(g.indices, dtype="<u4").tobytes())
    parts.append(np.asarray(g.values, dtype="<f4").tobytes())
    if g.rowPerm is not None:
        parts.append(np.asarray(g.rowPerm, dtype="<u4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes) -> None:
        self.blob = blob
        self.offset = 0

    def take(self, size: int, field: str) -> bytes:
        if self.offset + size > len(self.blob):
            raise GsFormatError(
                f"{field} truncated: need {size} bytes at offset {self.offset}, "
                f"file has {len(self.blob)}"
            )
        chunk = self.blob[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def array(self, count: int, dtype: str, field: str) -> np.ndarray:
        return np.frombuffer(self.take(4 * count, field), dtype=dtype).copy()


def decodeGssf(blob: bytes) -> GsBsrMatrix:
    """Parse GSSF bytes; errors name the failing field."""
    reader = _Reader(blob)
    magic, version, familyCode, banks, k, kindCode, rows, cols = _HEADER.unpack(
        reader.take(_HEADER.size, "header")
    )
    if magic != GSSF_MAGIC:
        raise GsFormatError(f"header: bad magic {magic!r}, expected {GSSF_MAGIC!r}")
    if version != GSSF_VERSION:
        raise GsFormatError(f"header: unsupported version {version}")
    try:
        family = PatternFamily.fromFileCode(familyCode)
        kind = TensorKind.fromFileCode(kindCode)
        pattern = PatternDescriptor(family=family, banks=banks, elemsPerRow=k)
    except ValueError as e:
        raise GsFormatError(f"header: {e}") from None
    if rows < 1 or cols < 1 or rows % pattern.bandRows:
        raise GsFormatError(f"header: invalid extents {rows}x{cols} for B/k={pattern.bandRows}")

    conv: Optional[ConvGeometry] = None
    if kind != TensorKind.MATRIX:
        o, h, kw, i, actWidth, actChannels = _CONV.unpack(reader.take(_CONV.size, "conv"))
        try:
            conv = ConvGeometry(
                layout=ConvLayout.OLI if kind == TensorKind.CONV1D else ConvLayout.OHWI,
                outChannels=o,
                kernelH=h,
                kernelW=kw,
                inChannels=i,
                actWidth=actWidth,
                actChannels=actChannels,
            )
        except ValueError as e:
            raise GsFormatError(f"conv: {e}") from None

    (groupCount,) = _U32.unpack(reader.take(_U32.size, "group_count"))
    bandCount = rows // pattern.bandRows
    indptr = reader.array(bandCount + 1, "<u4", "indptr")
    indices = reader.array(groupCount * banks, "<u4", "indices").reshape(groupCount, banks)
    values = reader.array(groupCount * banks, "<f4", "values").reshape(groupCount, banks)
    rowPerm = None
    if family == PatternFamily.GS_SCATTER:
        rowPerm = reader.array(rows, "<u4", "row_perm").astype(np.int64)
    if reader.offset != len(blob):
        raise GsFormatError(f"{len(blob) - reader.offset} trailing bytes after the last table")

    matrix = GsBsrMatrix(
        pattern=pattern,
        rows=rows,
        cols=cols,
        values=values.astype(np.float32),
        indices=indices.astype(np.uint32),
        indptr=indptr.astype(np.uint32),
        conv=conv,
        rowPerm=rowPerm,
    )
    validateStructure(matrix)
    return matrix


def saveGssf(g: GsBsrMatrix, path: Path) -> None:
    writeAtomic(Path(path), encodeGssf(g))
    logger.info("Saved GSSF | path={} groups={} pattern={}", path, g.groupCount, g.pattern.toSpec())


def loadGssf(path: Path) -> GsBsrMatrix:
    blob = Path(path).read_bytes()
    try:
        return decodeGssf(blob)
    except GsFormatError as e:
        raise GsFormatError(f"{path}: {e}") from None
