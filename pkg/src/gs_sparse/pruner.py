"""Magnitude-based pattern selection.

Every selector ranks candidates by (|w| descending, column ascending, row
ascending) and keeps an entry only when |w| is strictly above the threshold
count, so outputs are deterministic including group order.
"""

import math
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import networkx as nx
import numpy as np
from loguru import logger

from .enums import PatternFamily, ThresholdMode
from .patterns import describePattern, toMask
from .schemas import PatternDescriptor, ThresholdSpec
from .tensorIo import asFloatArray

Coord = tuple[int, int]

# Guards floor(sparsity * size) against products like 0.29 * 100 = 28.999...
_FLOOR_EPS = 1e-9


class PruneError(ValueError):
    """Raised when a pattern cannot be selected from the given weights."""

    pass


@dataclass
class GroupedMask:
    """
    Binary mask plus its partition into conflict-free gather groups.

    Groups are stored band-major; within a group coordinates are sorted by
    (local band row, column residue). With `rowPerm`, band position i holds
    original row rowPerm[i] and coordinates use original row indices.
    """

    pattern: PatternDescriptor
    mask: np.ndarray
    groups: list[list[Coord]]
    rowPerm: Optional[np.ndarray] = None

    @property
    def bandSize(self) -> int:
        return self.pattern.bandRows

    @property
    def groupCount(self) -> int:
        return len(self.groups)

    def rowPositions(self) -> np.ndarray:
        """Band position of every original row (inverse of rowPerm)."""
        rows = self.mask.shape[0]
        if self.rowPerm is None:
            return np.arange(rows)
        positions = np.empty(rows, dtype=np.int64)
        positions[self.rowPerm] = np.arange(rows)
        return positions


def _asMatrix(w: Any) -> np.ndarray:
    arr = asFloatArray(w)
    if arr.ndim != 2:
        raise PruneError(f"weights must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise PruneError("weights are empty")
    return arr


def _dropCount(sparsity: float, size: int) -> int:
    return int(math.floor(sparsity * size + _FLOOR_EPS))


def irregularThreshold(w: Any, sparsity: float) -> float:
    """
    Magnitude threshold for irregular pruning at `sparsity`.

    Sort |w| ascending and take the value at index floor(sparsity·mn) - 1
    (-inf when that index is -1). Entries strictly above it are kept, so
    ties at the threshold are dropped.
    """
    if not 0.0 <= sparsity <= 1.0:
        raise PruneError(f"sparsity must be in [0, 1], got {sparsity}")
    mags = np.abs(np.asarray(asFloatArray(w))).ravel()
    if mags.size == 0:
        raise PruneError("cannot threshold an empty matrix")
    drop = _dropCount(sparsity, mags.size)
    if drop == 0:
        return -math.inf
    return float(np.sort(mags)[drop - 1])


def globalThreshold(weights: Sequence[Any], sparsity: float) -> float:
    """One irregular threshold over the concatenated magnitudes of several matrices."""
    if not weights:
        raise PruneError("no weights given")
    flat = np.concatenate([np.abs(asFloatArray(w)).ravel() for w in weights])
    return irregularThreshold(flat, sparsity)


def resolveThreshold(w: np.ndarray, spec: ThresholdSpec) -> float:
    if spec.mode == ThresholdMode.EXTERNAL:
        return float(spec.externalThreshold)  # type: ignore[arg-type]
    return irregularThreshold(w, spec.sparsity)


def _rankedColumns(mags: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """cols sorted by (|w| descending, column ascending)."""
    return cols[np.lexsort((cols, -mags[cols]))]


def pruneGsHorizontal(w: Any, banks: int, threshold: ThresholdSpec) -> GroupedMask:
    """
    Horizontal GS(B,B) selection.

    Per row: bucket columns by residue, rank each bucket by magnitude, count
    the above-threshold entries and take ceil(count/B) groups, each holding
    the next-best entry of every bucket.
    """
    w = _asMatrix(w)
    rows, cols = w.shape
    if banks < 1 or cols < banks:
        raise PruneError(f"horizontal selection needs 1 <= B <= n, got B={banks}, n={cols}")

    t = resolveThreshold(w, threshold)
    mags = np.abs(w)
    colResidues = np.arange(cols) % banks
    buckets = [np.flatnonzero(colResidues == b) for b in range(banks)]

    mask = np.zeros((rows, cols), dtype=bool)
    groups: list[list[Coord]] = []
    for row in range(rows):
        rowMags = mags[row]
        numItems = int((rowMags > t).sum())
        groupCount = math.ceil(numItems / banks)
        if groupCount == 0:
            continue

        ranked = []
        for residue, bucket in enumerate(buckets):
            if groupCount > len(bucket):
                raise PruneError(
                    f"row {row}: {groupCount} groups exceed the {len(bucket)} "
                    f"columns of residue {residue}"
                )
            ranked.append(_rankedColumns(rowMags, bucket))

        for g in range(groupCount):
            group = [(row, int(ranked[b][g])) for b in range(banks)]
            for _, col in group:
                mask[row, col] = True
            groups.append(group)

    pattern = PatternDescriptor(family=PatternFamily.GS_HYBRID, banks=banks, elemsPerRow=banks)
    logger.debug("Horizontal selection | B={} groups={} threshold={}", banks, len(groups), t)
    return GroupedMask(pattern=pattern, mask=mask, groups=groups)


class _BandSelector:
    """Greedy group filling for one band of B/k rows."""

    def __init__(
        self, bandMags: np.ndarray, banks: int, k: int, groupCount: int, band: int
    ) -> None:
        self.mags = bandMags
        self.banks = banks
        self.k = k
        self.groupCount = groupCount
        self.band = band
        self.bandRows, cols = bandMags.shape

        colResidues = np.arange(cols) % banks
        self.buckets = [
            [_rankedColumns(bandMags[r], np.flatnonzero(colResidues == b)) for b in range(banks)]
            for r in range(self.bandRows)
        ]
        self.sizes = np.array(
            [[len(bucket) for bucket in rowBuckets] for rowBuckets in self.buckets], dtype=np.int64
        )
        self.heads = np.zeros((self.bandRows, banks), dtype=np.int64)
        self.rowTotals = np.zeros(self.bandRows, dtype=np.int64)
        self.headMags = np.full((self.bandRows, banks), -np.inf)
        self.headCols = np.zeros((self.bandRows, banks), dtype=np.int64)
        for r in range(self.bandRows):
            for b in range(banks):
                self._refresh(r, b)

    def _refresh(self, r: int, b: int) -> None:
        if self.heads[r, b] < self.sizes[r, b]:
            col = int(self.buckets[r][b][self.heads[r, b]])
            self.headCols[r, b] = col
            self.headMags[r, b] = float(self.mags[r, col])
        else:
            self.headMags[r, b] = -np.inf

    def _take(self, r: int, b: int, picks: list[tuple[int, int, int]], quota: np.ndarray,
              used: np.ndarray) -> None:
        picks.append((r, b, int(self.headCols[r, b])))
        self.heads[r, b] += 1
        self._refresh(r, b)
        self.rowTotals[r] += 1
        quota[r] += 1
        used[b] = True

    def _release(self, pick: tuple[int, int, int], picks: list[tuple[int, int, int]],
                 quota: np.ndarray, used: np.ndarray) -> None:
        r, b, _ = pick
        picks.remove(pick)
        self.heads[r, b] -= 1
        self._refresh(r, b)
        self.rowTotals[r] -= 1
        quota[r] -= 1
        used[b] = False

    def _openRows(self, quota: np.ndarray) -> np.ndarray:
        return (quota < self.k) & (self.rowTotals < self.groupCount * self.k)

    def _repair(self, picks: list[tuple[int, int, int]], quota: np.ndarray,
                used: np.ndarray) -> bool:
        """
        Swap out the smallest selected entry (r, b) for two placements: row r
        on a missing residue, and an open row on residue b.
        """
        available = self.heads < self.sizes
        openRows = np.flatnonzero(self._openRows(quota))
        missing = np.flatnonzero(~used)
        order = sorted(picks, key=lambda p: (float(self.mags[p[0], p[2]]), -p[2], -p[0]))
        for pick in order:
            r, b, _ = pick
            for residue in missing:
                if not available[r, residue]:
                    continue
                for q in openRows:
                    if q == r or not available[q, b]:
                        continue
                    self._release(pick, picks, quota, used)
                    self._take(r, int(residue), picks, quota, used)
                    self._take(int(q), b, picks, quota, used)
                    logger.warning(
                        "Repaired stalled group | band={} released_row={} residue={}",
                        self.band, r, b,
                    )
                    return True
        return False

    def nextGroup(self) -> Optional[list[tuple[int, int]]]:
        """Fill one group; returns (local row, column) pairs, or None on a stall."""
        quota = np.zeros(self.bandRows, dtype=np.int64)
        used = np.zeros(self.banks, dtype=bool)
        picks: list[tuple[int, int, int]] = []
        noColumn = np.iinfo(np.int64).max

        while len(picks) < self.banks:
            admissible = (
                (~used)[None, :]
                & self._openRows(quota)[:, None]
                & (self.heads < self.sizes)
            )
            if not admissible.any():
                if self._repair(picks, quota, used):
                    continue
                return None

            # (|w| desc, column asc, row asc)
            candidateMags = np.where(admissible, self.headMags, -np.inf)
            tied = admissible & (candidateMags == candidateMags.max())
            tiedCols = np.where(tied, self.headCols, noColumn)
            r, b = (int(v) for v in np.argwhere(tiedCols == tiedCols.min())[0])
            self._take(r, b, picks, quota, used)

        return [(r, col) for r, b, col in sorted(picks, key=lambda p: (p[0], p[1]))]


def matchBand(
    bandMask: np.ndarray, banks: int, k: int, band: int
) -> list[list[tuple[int, int]]]:
    """
    Peel perfect matchings off the band's regular bipartite multigraph.

    Left nodes are k copies of every band row, each owning an equal slice of
    the row's entries sorted by (residue, column); right nodes are residues.
    """
    bandRows = bandMask.shape[0]
    total = int(bandMask.sum())
    groupCount = total // banks
    if groupCount == 0:
        return []

    slots: dict[tuple[int, int], dict[int, list[int]]] = {}
    for r in range(bandRows):
        cols = np.flatnonzero(bandMask[r])
        entries = sorted((int(c) % banks, int(c)) for c in cols)
        for copy in range(k):
            slot: dict[int, list[int]] = {}
            for residue, col in entries[copy * groupCount : (copy + 1) * groupCount]:
                slot.setdefault(residue, []).append(col)
            slots[(r, copy)] = slot

    leftNodes = [("row", r, c) for r in range(bandRows) for c in range(k)]
    groups = []
    for g in range(groupCount):
        graph = nx.Graph()
        graph.add_nodes_from(leftNodes, bipartite=0)
        graph.add_nodes_from((("res", b) for b in range(banks)), bipartite=1)
        for (r, c), slot in slots.items():
            for residue, cols in slot.items():
                if cols:
                    graph.add_edge(("row", r, c), ("res", residue))

        matching = nx.bipartite.hopcroft_karp_matching(graph, top_nodes=leftNodes)
        group = []
        for node in leftNodes:
            if node not in matching:
                raise PruneError(f"band {band}: no conflict-free group {g}")
            _, r, c = node
            residue = matching[node][1]
            group.append((r, slots[(r, c)][residue].pop(0)))
        groups.append(sorted(group, key=lambda rc: (rc[0], rc[1] % banks)))
    return groups


def _topUpCounts(
    counts: np.ndarray, capacity: np.ndarray, rowQuota: int, residueQuota: int, band: int
) -> np.ndarray:
    """
    Complete per-(row, residue) counts with a min-cost flow.

    Keeping a greedy count is free and every extra entry costs 1, so the
    flow departs from the greedy choice as little as the quotas allow.
    """
    bandRows, banks = counts.shape
    graph = nx.DiGraph()
    for r in range(bandRows):
        graph.add_edge("source", ("row", r), capacity=rowQuota, weight=0)
        for b in range(banks):
            if counts[r, b]:
                graph.add_edge(("row", r), ("res", b), capacity=int(counts[r, b]), weight=0)
            spare = int(capacity[b] - counts[r, b])
            if spare:
                graph.add_edge(("row", r), ("add", r, b), capacity=spare, weight=1)
                graph.add_edge(("add", r, b), ("res", b), capacity=spare, weight=0)
    for b in range(banks):
        graph.add_edge(("res", b), "sink", capacity=residueQuota, weight=0)

    flow = nx.max_flow_min_cost(graph, "source", "sink")
    topped = np.zeros_like(counts)
    for r in range(bandRows):
        out = flow[("row", r)]
        for b in range(banks):
            topped[r, b] = out.get(("res", b), 0) + out.get(("add", r, b), 0)

    if int(topped.sum()) < bandRows * rowQuota:
        raise PruneError(
            f"band {band}: {residueQuota} groups cannot be filled with "
            f"{rowQuota} entries per row and {residueQuota} per residue"
        )
    return topped


def _rebalanceBand(
    bandMags: np.ndarray, banks: int, k: int, groupCount: int, band: int
) -> list[list[tuple[int, int]]]:
    """
    Select a stalled band as a whole, then split it into groups.

    Entries are taken in rank order while their row holds fewer than G·k and
    their residue fewer than G; counts the walk leaves short are topped up by
    flow, each bucket keeps its largest entries and the kept set is matched
    into groups.
    """
    bandRows, cols = bandMags.shape
    residues = np.arange(cols) % banks
    capacity = np.bincount(residues, minlength=banks)
    rowQuota = groupCount * k

    counts = np.zeros((bandRows, banks), dtype=np.int64)
    rowTotals = np.zeros(bandRows, dtype=np.int64)
    residueTotals = np.zeros(banks, dtype=np.int64)
    rowIds, colIds = np.divmod(np.arange(bandRows * cols), cols)
    for i in np.lexsort((rowIds, colIds, -bandMags.ravel())):
        r, b = int(rowIds[i]), int(residues[colIds[i]])
        if rowTotals[r] < rowQuota and residueTotals[b] < groupCount:
            counts[r, b] += 1
            rowTotals[r] += 1
            residueTotals[b] += 1

    if int(counts.sum()) < bandRows * rowQuota:
        counts = _topUpCounts(counts, capacity, rowQuota, groupCount, band)

    bandMask = np.zeros((bandRows, cols), dtype=bool)
    for r in range(bandRows):
        for b in range(banks):
            bucket = _rankedColumns(bandMags[r], np.flatnonzero(residues == b))
            bandMask[r, bucket[: counts[r, b]]] = True
    return matchBand(bandMask, banks, k, band)


def _selectBands(
    w: np.ndarray, banks: int, k: int, t: float, order: np.ndarray
) -> tuple[np.ndarray, list[list[Coord]]]:
    rows, cols = w.shape
    bandRows = banks // k
    mags = np.abs(w)
    mask = np.zeros((rows, cols), dtype=bool)
    groups: list[list[Coord]] = []

    for band in range(rows // bandRows):
        bandOriginal = order[band * bandRows : (band + 1) * bandRows]
        bandMags = mags[bandOriginal]
        numItems = int((bandMags > t).sum())
        groupCount = math.ceil(numItems / banks)
        if groupCount == 0:
            continue

        selector = _BandSelector(bandMags, banks, k, groupCount, band)
        bandGroups: list[list[tuple[int, int]]] = []
        for g in range(groupCount):
            local = selector.nextGroup()
            if local is None:
                logger.warning(
                    "Group fill stalled, rebalancing band | band={} group={} groups={}",
                    band, g, groupCount,
                )
                bandGroups = _rebalanceBand(bandMags, banks, k, groupCount, band)
                break
            bandGroups.append(local)

        for local in bandGroups:
            group = [(int(bandOriginal[r]), col) for r, col in local]
            for row, col in group:
                mask[row, col] = True
            groups.append(group)
        logger.debug("Band selected | band={} groups={}", band, groupCount)

    return mask, groups


def _checkBandShape(w: np.ndarray, banks: int, k: int) -> None:
    if k < 1 or banks % k:
        raise PruneError(f"k={k} must divide B={banks}")
    if w.shape[0] % (banks // k):
        raise PruneError(f"m={w.shape[0]} is not divisible by B/k={banks // k}")


def pruneGsBand(w: Any, banks: int, k: int, threshold: ThresholdSpec) -> GroupedMask:
    """
    Vertical/hybrid GS(B,k) selection.

    Per band of B/k rows, ceil(count/B) groups are filled one at a time by
    repeatedly taking the largest bucket head whose residue is unused in the
    group and whose row still has fewer than k entries in it. A band whose
    fill stalls is reselected whole and split by matching; PruneError only
    when no selection meets the quotas.
    """
    w = _asMatrix(w)
    _checkBandShape(w, banks, k)
    t = resolveThreshold(w, threshold)
    mask, groups = _selectBands(w, banks, k, t, np.arange(w.shape[0]))
    pattern = PatternDescriptor(family=PatternFamily.GS_HYBRID, banks=banks, elemsPerRow=k)
    return GroupedMask(pattern=pattern, mask=mask, groups=groups)


def pruneGsScatter(w: Any, banks: int, k: int, threshold: ThresholdSpec) -> GroupedMask:
    """
    GS_scatter(B,k) selection: rows sorted by descending above-threshold
    count (ties by row index), then banded greedily in that order.
    """
    w = _asMatrix(w)
    _checkBandShape(w, banks, k)
    t = resolveThreshold(w, threshold)
    counts = (np.abs(w) > t).sum(axis=1)
    order = np.lexsort((np.arange(w.shape[0]), -counts))
    mask, groups = _selectBands(w, banks, k, t, order)
    pattern = PatternDescriptor(family=PatternFamily.GS_SCATTER, banks=banks, elemsPerRow=k)
    return GroupedMask(pattern=pattern, mask=mask, groups=groups, rowPerm=order)


def pruneBlock(w: Any, banks: int, k: int, threshold: ThresholdSpec) -> np.ndarray:
    """
    Block(B,k) selection on the fixed (B/k)×k grid.

    Per block row, the ceil(count/B) blocks with the largest L1 score are
    kept (ties to the lower block index), where count is the number of
    above-threshold entries in the block row.
    """
    w = _asMatrix(w)
    if k < 1 or banks % k:
        raise PruneError(f"k={k} must divide B={banks}")
    rows, cols = w.shape
    blockH, blockW = banks // k, k
    if rows % blockH or cols % blockW:
        raise PruneError(f"{rows}x{cols} is not divisible into {blockH}x{blockW} blocks")

    t = resolveThreshold(w, threshold)
    mags = np.abs(w).astype(np.float64)
    gridShape = (rows // blockH, blockH, cols // blockW, blockW)
    scores = mags.reshape(gridShape).sum(axis=(1, 3))
    above = (mags > t).reshape(gridShape).sum(axis=(1, 3, 2))

    mask = np.zeros((rows, cols), dtype=bool)
    for blockRow, numItems in enumerate(above):
        keep = math.ceil(int(numItems) / banks)
        for blockCol in np.argsort(-scores[blockRow], kind="stable")[:keep]:
            r0, c0 = blockRow * blockH, int(blockCol) * blockW
            mask[r0 : r0 + blockH, c0 : c0 + blockW] = True
    return mask


def pruneIrregular(w: Any, threshold: ThresholdSpec) -> np.ndarray:
    """Unconstrained mask: |w| strictly above the threshold."""
    w = _asMatrix(w)
    return np.abs(w) > resolveThreshold(w, threshold)


def pruneTopKPerRow(w: Any, counts: Sequence[int]) -> np.ndarray:
    """Per-row top-K mask (ties to the lower column)."""
    w = _asMatrix(w)
    rows, cols = w.shape
    if len(counts) != rows:
        raise PruneError(f"need {rows} per-row counts, got {len(counts)}")
    mags = np.abs(w)
    mask = np.zeros((rows, cols), dtype=bool)
    allCols = np.arange(cols)
    for row, count in enumerate(counts):
        if not 0 <= count <= cols:
            raise PruneError(f"row {row}: count {count} outside 0..{cols}")
        mask[row, _rankedColumns(mags[row], allCols)[: int(count)]] = True
    return mask


def blockGroups(mask: np.ndarray, banks: int) -> list[list[Coord]]:
    """Each kept 1×B block of a Block(B,B) mask as one gather group."""
    mask = toMask(mask)
    rows, cols = mask.shape
    groups = []
    for row in range(rows):
        for c0 in range(0, cols, banks):
            if mask[row, c0]:
                groups.append([(row, c0 + j) for j in range(banks)])
    return groups


def keptMagnitude(w: Any, mask: Any) -> float:
    """Σ |w| over retained positions, exactly rounded."""
    w = asFloatArray(w)
    mask = toMask(mask)
    if w.shape != mask.shape:
        raise PruneError(f"weight shape {w.shape} does not match mask shape {mask.shape}")
    return math.fsum(np.abs(w[mask]).astype(np.float64).tolist())


def realizedSparsity(mask: Any) -> float:
    mask = toMask(mask)
    return 1.0 - float(mask.sum()) / mask.size


def padRows(w: Any, multiple: int) -> np.ndarray:
    """Zero-pad rows up to a multiple of `multiple`."""
    w = _asMatrix(w)
    extra = (-w.shape[0]) % multiple
    if extra == 0:
        return w
    return np.vstack([w, np.zeros((extra, w.shape[1]), dtype=np.float32)])


@dataclass
class PruneOutcome:
    """Mask for any family plus the grouping when the family has one."""

    pattern: PatternDescriptor
    mask: np.ndarray
    threshold: float
    grouped: Optional[GroupedMask] = None

    @property
    def groupCount(self) -> int:
        return self.grouped.groupCount if self.grouped else 0


def prunePattern(w: Any, pattern: PatternDescriptor, threshold: ThresholdSpec) -> PruneOutcome:
    """Dispatch to the selector for `pattern`."""
    w = _asMatrix(w)
    t = resolveThreshold(w, threshold)
    fixed = (
        threshold
        if math.isinf(t)
        else ThresholdSpec(mode=ThresholdMode.EXTERNAL, externalThreshold=t)
    )
    banks, k = pattern.banks, pattern.elemsPerRow

    grouped: Optional[GroupedMask] = None
    if pattern.family == PatternFamily.GS_HYBRID:
        grouped = (
            pruneGsHorizontal(w, banks, fixed)
            if pattern.isHorizontal
            else pruneGsBand(w, banks, k, fixed)
        )
        mask = grouped.mask
    elif pattern.family == PatternFamily.GS_SCATTER:
        grouped = pruneGsScatter(w, banks, k, fixed)
        mask = grouped.mask
    elif pattern.family == PatternFamily.BLOCK:
        mask = pruneBlock(w, banks, k, fixed)
        if pattern.isHorizontal:
            grouped = GroupedMask(pattern=pattern, mask=mask, groups=blockGroups(mask, banks))
    else:
        mask = pruneIrregular(w, fixed)

    logger.info(
        "Pruned weights | pattern={} shape={} kept={} groups={} threshold={}",
        describePattern(pattern), w.shape, int(mask.sum()),
        grouped.groupCount if grouped else 0, t,
    )
    return PruneOutcome(pattern=pattern, mask=mask, threshold=t, grouped=grouped)
