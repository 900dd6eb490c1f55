"""Configuration schema models."""

import math
from typing import Optional

from pydantic import BaseModel, Field

from ..enums import LogFormat


class TcmConfig(BaseModel):
    """Tightly coupled memory and gather/scatter engine parameters."""

    banks: int = Field(default=8, ge=1, description="Number of TCM sub-banks (B)")
    gatherBaseCycles: int = Field(
        default=3,
        ge=1,
        alias="gather_base_cycles",
        description="Latency of a conflict-free gather",
    )
    conflictPenaltyCycles: int = Field(
        default=1,
        ge=1,
        alias="conflict_penalty_cycles",
        description="Extra cycles per serialized access",
    )

    model_config = {"populate_by_name": True}


class CostParams(BaseModel):
    """Per-instruction cycle counts of the kernel loop skeletons."""

    weightLoadCycles: int = Field(default=1, ge=0, alias="weight_load_cycles")
    indexLoadCycles: int = Field(default=1, ge=0, alias="index_load_cycles")
    macCycles: int = Field(default=1, ge=0, alias="mac_cycles")
    outerOverheadCycles: int = Field(default=2, ge=0, alias="outer_overhead_cycles")
    reductionCycles: Optional[int] = Field(
        default=None,
        ge=0,
        alias="reduction_cycles",
        description="Cross-lane reduction cost; defaults to ceil(log2 B)",
    )
    denseLoadCycles: int = Field(
        default=1,
        ge=0,
        alias="dense_load_cycles",
        description="Contiguous B-wide activation load in the dense kernel",
    )
    denseMacCycles: int = Field(default=1, ge=0, alias="dense_mac_cycles")

    model_config = {"populate_by_name": True}

    def reductionFor(self, lanes: int) -> int:
        """Cycles to reduce `lanes` accumulator lanes to one scalar."""
        if lanes <= 1:
            return 0
        if self.reductionCycles is not None:
            return self.reductionCycles
        return math.ceil(math.log2(lanes))


class GsConfig(BaseModel):
    """Root configuration."""

    tcm: TcmConfig = Field(default_factory=TcmConfig)
    cost: CostParams = Field(default_factory=CostParams)
    logLevel: str = Field(default="info", alias="log_level", description="Log level")
    logFormat: LogFormat = Field(
        default=LogFormat.PRETTY, alias="log_format", description="Log output format"
    )

    model_config = {"populate_by_name": True}
