"""Bank-conflict and cycle cost model of the TCM gather/scatter engine.

Activation element i lives in sub-bank i mod B. A gather touching several
offsets in one bank is serialized, so its access count is the largest number
of offsets sharing a residue. Cycle estimates price the loop skeletons of the
horizontal, vertical/hybrid, block and dense kernels with `CostParams`.
"""

import math
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np
from loguru import logger

from .enums import CsrOrder, KernelKind, PatternFamily
from .gsFormat import GsBsrMatrix
from .kernels import KernelTrace
from .patterns import toMask
from .schemas import CostParams, PatternDescriptor, TcmConfig
from .tensorIo import MAX_SEED, makeRng

MAX_RESAMPLES = 100


class CostModelError(ValueError):
    """Raised for inputs the cost model cannot price."""

    pass


@dataclass
class AccessReport:
    """Serialized vs ideal TCM accesses of a set of gathers."""

    totalGathers: int
    serializedAccesses: int
    idealAccesses: int

    @property
    def ratio(self) -> float:
        if self.idealAccesses == 0:
            return 1.0
        return self.serializedAccesses / self.idealAccesses


@dataclass
class AccessRatios:
    """Mean CSR access ratios over the balanced lower bound."""

    ascendingRatio: float
    reorderRatio: float
    trials: int = 1
    resampled: int = 0


@dataclass
class KernelWorkload:
    """What a kernel executes: loop shape and group count, per output pixel."""

    kind: KernelKind
    rows: int
    cols: int
    banks: int
    elemsPerRow: int
    groups: int
    pixels: int = 1

    @property
    def bands(self) -> int:
        return self.rows * self.elemsPerRow // self.banks


@dataclass
class CycleEstimate:
    kind: KernelKind
    cycles: int
    denseCycles: int

    @property
    def speedup(self) -> float:
        return self.denseCycles / self.cycles if self.cycles else math.inf


def gatherAccesses(offsets: Sequence[int], cfg: TcmConfig) -> int:
    """Serialized accesses of one gather: max offsets sharing a sub-bank (0 if empty)."""
    offsets = np.asarray(offsets, dtype=np.int64)
    if offsets.size == 0:
        return 0
    if np.any(offsets < 0):
        raise CostModelError("gather offsets must be non-negative")
    return int(np.bincount(offsets % cfg.banks, minlength=cfg.banks).max())


def gatherCycles(offsets: Sequence[int], cfg: TcmConfig) -> int:
    """Base latency plus one penalty per access beyond the first."""
    accesses = gatherAccesses(offsets, cfg)
    if accesses == 0:
        return 0
    return cfg.gatherBaseCycles + (accesses - 1) * cfg.conflictPenaltyCycles


def csrRowAccesses(cols: Sequence[int], banks: int, order: CsrOrder) -> int:
    """
    Serialized accesses to gather one CSR row's activations.

    ASCENDING issues consecutive chunks of B columns; OPTIMAL_REORDER is the
    largest residue multiplicity, since a conflict-free gather takes at most
    one column per residue.
    """
    cols = np.asarray(cols, dtype=np.int64)
    if cols.size == 0:
        return 0
    if np.any(np.diff(cols) <= 0):
        raise CostModelError("CSR row columns must be strictly increasing")
    residues = cols % banks
    if order == CsrOrder.OPTIMAL_REORDER:
        return int(np.bincount(residues, minlength=banks).max())
    return sum(
        int(np.bincount(residues[start : start + banks], minlength=banks).max())
        for start in range(0, cols.size, banks)
    )


def _maskAccessCounts(mask: np.ndarray, banks: int) -> tuple[int, int, int]:
    """Σ ascending, Σ reorder and Σ ceil(nnz_row/B) over the rows of a mask."""
    rows, cols = mask.shape
    rowIdx, colIdx = np.nonzero(mask)
    residues = colIdx % banks

    rankInRow = np.cumsum(mask, axis=1)[rowIdx, colIdx] - 1
    chunks = math.ceil(cols / banks)
    chunkKey = (rowIdx * chunks + rankInRow // banks) * banks + residues
    perChunk = np.bincount(chunkKey, minlength=rows * chunks * banks)
    ascending = int(perChunk.reshape(rows * chunks, banks).max(axis=1).sum())

    perRow = np.bincount(rowIdx * banks + residues, minlength=rows * banks)
    reorder = int(perRow.reshape(rows, banks).max(axis=1).sum())

    ideal = int(np.sum(-(-mask.sum(axis=1) // banks)))
    return ascending, reorder, ideal


def accessRatioFromMask(mask: Any, banks: int) -> AccessRatios:
    """CSR access ratios of a given mask against the balanced lower bound."""
    mask = toMask(mask)
    if banks < 1:
        raise CostModelError(f"banks must be >= 1, got {banks}")
    ascending, reorder, ideal = _maskAccessCounts(mask, banks)
    if ideal == 0:
        raise CostModelError("mask has no non-zeros")
    return AccessRatios(ascendingRatio=ascending / ideal, reorderRatio=reorder / ideal)


def _trialSeed(seed: int, trial: int, attempt: int, trials: int) -> int:
    # draw a of trial t: seed + t + a·trials, distinct across the whole experiment
    return (seed + trial + attempt * trials) % (MAX_SEED + 1)


def accessRatioExperiment(
    m: int, n: int, sparsity: float, banks: int, trials: int, seed: int
) -> AccessRatios:
    """
    Mean CSR access ratios over i.i.d. random masks.

    Trial t samples its mask from seed + t; a mask with no non-zeros is
    redrawn with the sub-seed incremented by the trial count.
    """
    if min(m, n, banks, trials) < 1:
        raise CostModelError("m, n, banks and trials must be positive")
    if not 0.0 < sparsity < 1.0:
        raise CostModelError(f"sparsity must be in (0, 1), got {sparsity}")

    ascendingRatios, reorderRatios = [], []
    resampled = 0
    for trial in range(trials):
        for attempt in range(MAX_RESAMPLES):
            rng = makeRng(_trialSeed(seed, trial, attempt, trials))
            mask = rng.random((m, n)) >= sparsity
            if mask.any():
                break
            resampled += 1
            logger.warning("Empty mask, resampling | trial={} attempt={}", trial, attempt + 1)
        else:
            raise CostModelError(f"trial {trial}: no non-zeros after {MAX_RESAMPLES} draws")

        ascending, reorder, ideal = _maskAccessCounts(mask, banks)
        ascendingRatios.append(ascending / ideal)
        reorderRatios.append(reorder / ideal)

    result = AccessRatios(
        ascendingRatio=float(np.mean(ascendingRatios)),
        reorderRatio=float(np.mean(reorderRatios)),
        trials=trials,
        resampled=resampled,
    )
    logger.info(
        "Access ratios | m={} n={} sparsity={} B={} ascending={:.3f} reorder={:.3f}",
        m, n, sparsity, banks, result.ascendingRatio, result.reorderRatio,
    )
    return result


def _kindFor(pattern: PatternDescriptor) -> KernelKind:
    if pattern.family == PatternFamily.IRREGULAR:
        raise CostModelError("irregular patterns have no GS kernel to price")
    if pattern.family == PatternFamily.BLOCK:
        return KernelKind.BLOCK_HORIZONTAL if pattern.isHorizontal else KernelKind.BLOCK_VERTICAL
    if pattern.isHorizontal:
        return KernelKind.HORIZONTAL
    return KernelKind.VERTICAL if pattern.isVertical else KernelKind.HYBRID


def workloadFromMatrix(g: GsBsrMatrix, pixels: int = 1) -> KernelWorkload:
    """Workload of an encoded matrix; conv filters run once per output pixel."""
    return KernelWorkload(
        kind=_kindFor(g.pattern),
        rows=g.rows,
        cols=g.cols,
        banks=g.banks,
        elemsPerRow=g.pattern.elemsPerRow,
        groups=g.groupCount,
        pixels=pixels,
    )


def workloadFromDescriptor(
    pattern: PatternDescriptor, rows: int, cols: int, sparsity: float, pixels: int = 1
) -> KernelWorkload:
    """Synthetic workload with round((1-s)·m·n / B) groups."""
    if not 0.0 <= sparsity <= 1.0:
        raise CostModelError(f"sparsity must be in [0, 1], got {sparsity}")
    if rows % pattern.bandRows or cols < pattern.banks:
        raise CostModelError(
            f"{rows}x{cols} does not fit {pattern.toSpec()} (m divisible by B/k, n >= B)"
        )
    return KernelWorkload(
        kind=_kindFor(pattern),
        rows=rows,
        cols=cols,
        banks=pattern.banks,
        elemsPerRow=pattern.elemsPerRow,
        groups=round((1.0 - sparsity) * rows * cols / pattern.banks),
        pixels=pixels,
    )


def denseWorkload(rows: int, cols: int, banks: int, pixels: int = 1) -> KernelWorkload:
    return KernelWorkload(
        kind=KernelKind.DENSE,
        rows=rows,
        cols=cols,
        banks=banks,
        elemsPerRow=banks,
        groups=rows * math.ceil(cols / banks),
        pixels=pixels,
    )


def _loopCycles(workload: KernelWorkload, cfg: TcmConfig, params: CostParams) -> int:
    if workload.kind == KernelKind.DENSE:
        inner = params.weightLoadCycles + params.denseLoadCycles + params.denseMacCycles
        return (
            workload.rows * params.outerOverheadCycles
            + workload.groups * inner
            + workload.rows * params.reductionFor(workload.banks)
        )

    # block loads are contiguous, priced like a conflict-free gather
    inner = (
        params.weightLoadCycles
        + params.indexLoadCycles
        + cfg.gatherBaseCycles
        + params.macCycles
    )
    if workload.kind in (KernelKind.HORIZONTAL, KernelKind.BLOCK_HORIZONTAL):
        return (
            workload.rows * params.outerOverheadCycles
            + workload.groups * inner
            + workload.rows * params.reductionFor(workload.banks)
        )
    return (
        workload.bands * params.outerOverheadCycles
        + workload.groups * inner
        + workload.bands * params.reductionFor(workload.elemsPerRow)
    )


def estimateCycles(
    workload: KernelWorkload,
    cfg: Optional[TcmConfig] = None,
    params: Optional[CostParams] = None,
) -> CycleEstimate:
    """Estimated cycles of `workload` and of the dense kernel on the same shape."""
    cfg = cfg or TcmConfig()
    params = params or CostParams()
    if workload.pixels < 1 or workload.groups < 0:
        raise CostModelError(f"invalid workload: {workload}")
    if workload.banks % workload.elemsPerRow:
        raise CostModelError(f"k={workload.elemsPerRow} must divide B={workload.banks}")

    dense = denseWorkload(workload.rows, workload.cols, workload.banks)
    cycles = workload.pixels * _loopCycles(workload, cfg, params)
    denseCycles = workload.pixels * _loopCycles(dense, cfg, params)
    logger.debug("Estimated cycles | kind={} cycles={} dense={}", workload.kind.value, cycles, denseCycles)
    return CycleEstimate(kind=workload.kind, cycles=cycles, denseCycles=denseCycles)


def _gatherReport(offsets: np.ndarray, banks: int) -> AccessReport:
    gathers, lanes = offsets.shape
    if gathers == 0:
        return AccessReport(totalGathers=0, serializedAccesses=0, idealAccesses=0)
    if np.any(offsets < 0):
        raise CostModelError("gather offsets must be non-negative")
    perBank = np.zeros((gathers, banks), dtype=np.int64)
    np.add.at(perBank, (np.repeat(np.arange(gathers), lanes), (offsets % banks).ravel()), 1)
    return AccessReport(
        totalGathers=gathers,
        serializedAccesses=int(perBank.max(axis=1).sum()),
        idealAccesses=gathers * math.ceil(lanes / banks),
    )


def traceCost(trace: KernelTrace, cfg: TcmConfig) -> AccessReport:
    """Serialized vs ideal accesses of every gather in a kernel trace."""
    return _gatherReport(trace.offsets, cfg.banks)


def accessReportFor(g: GsBsrMatrix, cfg: Optional[TcmConfig] = None, pixels: int = 1) -> AccessReport:
    """Access report of one pass over an encoded matrix's groups."""
    report = _gatherReport(g.indices.astype(np.int64), cfg.banks if cfg else g.banks)
    return AccessReport(
        totalGathers=report.totalGathers * pixels,
        serializedAccesses=report.serializedAccesses * pixels,
        idealAccesses=report.idealAccesses * pixels,
    )
