"""Reference sparse kernels over the compact GS format, plus dense oracles.

Arithmetic is float32 throughout. Each band owns a B-lane accumulator that
gathers the group's activations by stored offset and accumulates the
element-wise product with the group's weights. At band end each row's k
lanes are reduced with a fixed pairwise tree (odd lane counts are padded with
a zero lane), so outputs are bit-stable for a given matrix and activation.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
from loguru import logger

from .gsFormat import GsBsrMatrix, validateStructure
from .tensorIo import asFloatArray, writeAtomic

_U32 = struct.Struct("<I")


class KernelError(ValueError):
    """Raised when a kernel's inputs do not fit together."""

    pass


@dataclass
class KernelTrace:
    """Offsets of every gather a kernel issued, one row per gather."""

    lanes: int
    _chunks: list[np.ndarray] = field(default_factory=list, repr=False)

    def record(self, offsets: np.ndarray) -> None:
        """Append a (gathers, lanes) block of absolute offsets."""
        self._chunks.append(np.asarray(offsets, dtype=np.int64).reshape(-1, self.lanes))

    @property
    def offsets(self) -> np.ndarray:
        if not self._chunks:
            return np.zeros((0, self.lanes), dtype=np.int64)
        return np.concatenate(self._chunks, axis=0)

    @property
    def gatherCount(self) -> int:
        return sum(len(chunk) for chunk in self._chunks)


def pairwiseReduce(acc: np.ndarray) -> np.ndarray:
    """Sum the last axis by halving: lanes (0,1), (2,3), ... then recurse."""
    acc = np.asarray(acc, dtype=np.float32)
    while acc.shape[-1] > 1:
        if acc.shape[-1] % 2:
            pad = np.zeros(acc.shape[:-1] + (1,), dtype=np.float32)
            acc = np.concatenate([acc, pad], axis=-1)
        acc = acc[..., 0::2] + acc[..., 1::2]
    return acc[..., 0]


def _executeGroups(
    g: GsBsrMatrix,
    flat: np.ndarray,
    bases: np.ndarray,
    trace: Optional[KernelTrace] = None,
) -> np.ndarray:
    """
    Run every group of `g` at each window origin in `bases`.

    Returns a (len(bases), m) float32 array in original row order.
    """
    banks, k, bandRows = g.banks, g.pattern.elemsPerRow, g.pattern.bandRows
    pixels = len(bases)
    result = np.zeros((pixels, g.rows), dtype=np.float32)
    if g.groupCount == 0:
        return result

    indices = g.indices.astype(np.int64)
    reach = int(bases.max()) + int(indices.max())
    if int(bases.min()) < 0 or reach >= flat.size:
        raise KernelError(
            f"gather offset {reach} is outside the activation buffer of {flat.size} elements"
        )

    indptr = g.indptr.astype(np.int64)
    for band in range(g.bandCount):
        first, last = indptr[band], indptr[band + 1]
        if first == last:
            continue
        acc = np.zeros((pixels, banks), dtype=np.float32)
        for group in range(first, last):
            offsets = bases[:, None] + indices[group][None, :]
            if trace is not None:
                trace.record(offsets)
            acc += flat[offsets] * g.values[group]

        rowSums = pairwiseReduce(acc.reshape(pixels, bandRows, k))
        positions = np.arange(band * bandRows, (band + 1) * bandRows)
        rows = positions if g.rowPerm is None else g.rowPerm[positions]
        result[:, rows] = rowSums
    return result


def _checkMatrixKernel(g: GsBsrMatrix, act: np.ndarray) -> None:
    validateStructure(g)
    if g.conv is not None:
        raise KernelError("matrix is bound to a conv geometry; run it with sparseConv")
    if act.ndim != 1 or act.shape[0] != g.cols:
        raise KernelError(f"activation shape {act.shape} does not match n={g.cols}")


def spmvHorizontal(g: GsBsrMatrix, act: Any, trace: Optional[KernelTrace] = None) -> np.ndarray:
    """
    GS(B,B) spMV: per row, gather-multiply-accumulate B lanes per group and
    reduce the lanes to one scalar.
    """
    if not g.pattern.isHorizontal:
        raise KernelError(
            f"spmvHorizontal needs k == B, got k={g.pattern.elemsPerRow}; use spmvVerticalHybrid"
        )
    act = asFloatArray(act)
    _checkMatrixKernel(g, act)
    return _executeGroups(g, act, np.zeros(1, dtype=np.int64), trace)[0]


def spmvVerticalHybrid(
    g: GsBsrMatrix, act: Any, trace: Optional[KernelTrace] = None
) -> np.ndarray:
    """
    GS(B,k<B) spMV: the B-lane accumulator holds partial sums of B/k rows
    (k lanes each), folded into row results at band end and written through
    row_perm for scatter matrices.
    """
    if g.pattern.isHorizontal:
        raise KernelError("spmvVerticalHybrid needs k < B; use spmvHorizontal")
    act = asFloatArray(act)
    _checkMatrixKernel(g, act)
    return _executeGroups(g, act, np.zeros(1, dtype=np.int64), trace)[0]


def spmv(g: GsBsrMatrix, act: Any, trace: Optional[KernelTrace] = None) -> np.ndarray:
    """Dispatch on k: horizontal when k == B, vertical/hybrid otherwise."""
    if g.pattern.isHorizontal:
        return spmvHorizontal(g, act, trace)
    return spmvVerticalHybrid(g, act, trace)


def spmm(g: GsBsrMatrix, acts: Any, trace: Optional[KernelTrace] = None) -> np.ndarray:
    """Batched spMV over the rows of an (N, n) activation batch; returns (N, m)."""
    acts = asFloatArray(acts)
    if acts.ndim != 2:
        raise KernelError(f"activation batch must be 2-D, got shape {acts.shape}")
    out = np.zeros((acts.shape[0], g.rows), dtype=np.float32)
    for i, act in enumerate(acts):
        out[i] = spmv(g, act, trace)
    return out


def _pair(value: Any, name: str, minimum: int) -> tuple[int, int]:
    if isinstance(value, int):
        value = (value, value)
    pair = tuple(int(v) for v in value)
    if len(pair) != 2 or any(v < minimum for v in pair):
        raise KernelError(f"{name} must be a pair of integers >= {minimum}, got {value}")
    return pair  # type: ignore[return-value]


def _asFeatureMap(act: Any) -> tuple[np.ndarray, bool]:
    """H×W×C view of the activation; rank-2 W×C inputs are 1-D feature maps."""
    act = asFloatArray(act)
    if act.ndim == 2:
        return act[None, :, :], True
    if act.ndim == 3:
        return act, False
    raise KernelError(f"conv activation must be H×W×C or W×C, got shape {act.shape}")


def _outputExtent(size: int, kernel: int, stride: int, dim: str) -> int:
    if size < kernel:
        raise KernelError(f"padded {dim} {size} is smaller than the kernel extent {kernel}")
    return (size - kernel) // stride + 1


def sparseConv(
    g: GsBsrMatrix,
    act: Any,
    stride: Any = (1, 1),
    padding: Any = (0, 0),
    trace: Optional[KernelTrace] = None,
) -> np.ndarray:
    """
    Sparse convolution: gathers use the stored offsets added to each window
    origin's flat NHWC index.

    Returns O×H_out×W_out, or O×W_out for a W×C activation.
    """
    validateStructure(g)
    if g.conv is None:
        raise KernelError("matrix has no conv geometry; encode the filter with --act-width")
    conv = g.conv
    strideH, strideW = _pair(stride, "stride", 1)
    padH, padW = _pair(padding, "padding", 0)

    fmap, oneDim = _asFeatureMap(act)
    if oneDim:
        padH = 0
    height, width, channels = fmap.shape
    if channels != conv.actChannels:
        raise KernelError(f"activation has {channels} channels, filter expects {conv.actChannels}")

    padded = np.pad(fmap, ((padH, padH), (padW, padW), (0, 0)))
    paddedH, paddedW = padded.shape[:2]
    if paddedW != conv.actWidth:
        raise KernelError(
            f"padded activation width {paddedW} differs from the encoded width "
            f"{conv.actWidth}; re-encode the filter with --act-width {paddedW}"
        )

    outH = _outputExtent(paddedH, conv.kernelH, strideH, "height")
    outW = _outputExtent(paddedW, conv.kernelW, strideW, "width")
    oy, ox = np.meshgrid(np.arange(outH), np.arange(outW), indexing="ij")
    bases = ((oy * strideH * paddedW + ox * strideW) * channels).ravel()

    result = _executeGroups(g, padded.ravel(), bases, trace)
    out = result.T.reshape(g.rows, outH, outW)
    logger.debug("Sparse conv | out={} groups={} pixels={}", out.shape, g.groupCount, len(bases))
    return out[:, 0, :] if oneDim else out


def denseMatvec(w: Any, act: Any) -> np.ndarray:
    """Reference matvec, accumulating column by column in float32."""
    w = asFloatArray(w)
    act = asFloatArray(act)
    if w.ndim != 2 or act.ndim != 1 or w.shape[1] != act.shape[0]:
        raise KernelError(f"cannot multiply {w.shape} by {act.shape}")
    acc = np.zeros(w.shape[0], dtype=np.float32)
    for j in range(w.shape[1]):
        acc += w[:, j] * act[j]
    return acc


def denseConv(w: Any, act: Any, stride: Any = (1, 1), padding: Any = (0, 0)) -> np.ndarray:
    """
    Reference direct convolution of an O×h×w×I (or O×L×I) filter, looping
    over taps (y, x, c) in row-major order.
    """
    w = asFloatArray(w)
    if w.ndim == 3:
        w = w[:, None, :, :]
    if w.ndim != 4:
        raise KernelError(f"filter must be rank 3 or 4, got shape {w.shape}")
    strideH, strideW = _pair(stride, "stride", 1)
    padH, padW = _pair(padding, "padding", 0)

    fmap, oneDim = _asFeatureMap(act)
    if oneDim:
        padH = 0
    outChannels, kernelH, kernelW, inChannels = w.shape
    if fmap.shape[2] != inChannels:
        raise KernelError(f"activation has {fmap.shape[2]} channels, filter expects {inChannels}")

    padded = np.pad(fmap, ((padH, padH), (padW, padW), (0, 0)))
    outH = _outputExtent(padded.shape[0], kernelH, strideH, "height")
    outW = _outputExtent(padded.shape[1], kernelW, strideW, "width")

    out = np.zeros((outChannels, outH, outW), dtype=np.float32)
    for y in range(kernelH):
        for x in range(kernelW):
            for c in range(inChannels):
                window = padded[
                    y : y + strideH * (outH - 1) + 1 : strideH,
                    x : x + strideW * (outW - 1) + 1 : strideW,
                    c,
                ]
                out += w[:, y, x, c][:, None, None] * window[None, :, :]
    return out[:, 0, :] if oneDim else out


def encodeTrace(trace: KernelTrace) -> bytes:
    """group_count u32, then one row of u32 offsets per gather."""
    offsets = trace.offsets
    return _U32.pack(len(offsets)) + offsets.astype("<u4").tobytes()


def decodeTrace(blob: bytes, lanes: Optional[int] = None) -> KernelTrace:
    """Parse trace bytes; the lane count is inferred unless the trace is empty."""
    if len(blob) < _U32.size:
        raise KernelError("trace: group_count truncated")
    (count,) = _U32.unpack_from(blob, 0)
    payload = len(blob) - _U32.size
    if count == 0:
        if payload:
            raise KernelError(f"trace: {payload} bytes after an empty group_count")
        return KernelTrace(lanes=lanes or 1)
    if payload % (4 * count):
        raise KernelError(f"trace: {payload} payload bytes do not split into {count} gathers")
    inferred = payload // (4 * count)
    if lanes is not None and inferred != lanes:
        raise KernelError(f"trace: gathers hold {inferred} offsets, expected {lanes}")
    trace = KernelTrace(lanes=inferred)
    trace.record(np.frombuffer(blob, dtype="<u4", offset=_U32.size).reshape(count, inferred))
    return trace


def saveTrace(trace: KernelTrace, path: Path) -> None:
    writeAtomic(Path(path), encodeTrace(trace))
    logger.info("Saved trace | path={} gathers={}", path, trace.gatherCount)


def loadTrace(path: Path, lanes: Optional[int] = None) -> KernelTrace:
    try:
        return decodeTrace(Path(path).read_bytes(), lanes)
    except KernelError as e:
        raise KernelError(f"{path}: {e}") from None
