"""Machine-readable report models.

Every report carries `"schema": 1`; field names on the wire are snake_case.
"""

from typing import Optional

from pydantic import BaseModel, Field

REPORT_SCHEMA_VERSION = 1


class _Report(BaseModel):
    schemaVersion: int = Field(default=REPORT_SCHEMA_VERSION, alias="schema")

    model_config = {"populate_by_name": True}

    def toJsonStr(self) -> str:
        """Serialize with wire (alias) names."""
        return self.model_dump_json(by_alias=True)


class PruneReport(_Report):
    """Outcome of `gs prune`."""

    pattern: str
    rows: int
    cols: int
    requestedSparsity: float = Field(alias="requested_sparsity")
    realizedSparsity: float = Field(alias="realized_sparsity")
    keptMagnitude: float = Field(alias="kept_magnitude")
    groupCount: int = Field(alias="group_count")
    threshold: Optional[float] = None


class BenchReport(_Report):
    """Outcome of `gs bench`."""

    pattern: str
    cycles: int
    denseCycles: int = Field(alias="dense_cycles")
    speedup: float
    serializedAccesses: int = Field(alias="serialized_accesses")
    idealAccesses: int = Field(alias="ideal_accesses")


class MotivateReport(_Report):
    """Outcome of `gs motivate`."""

    m: int
    n: int
    sparsity: Optional[float] = None
    banks: int
    trials: int
    seed: Optional[int] = None
    ascendingRatio: float = Field(alias="ascending_ratio")
    reorderRatio: float = Field(alias="reorder_ratio")


class StatsReport(_Report):
    """Outcome of `gs stats`."""

    source: str
    pattern: str
    valid: bool
    detail: str = ""
    band: Optional[int] = None
    row: Optional[int] = None
    residue: Optional[int] = None
    residueHistogram: list[int] = Field(default_factory=list, alias="residue_histogram")
    groupCount: Optional[int] = Field(default=None, alias="group_count")
    nnz: int = 0
