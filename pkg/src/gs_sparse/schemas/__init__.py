"""Schemas for GS Sparse."""

from .configSchema import CostParams, GsConfig, TcmConfig
from .patternSchema import ConvGeometry, PatternDescriptor, ThresholdSpec
from .reportSchema import (
    BenchReport,
    MotivateReport,
    PruneReport,
    StatsReport,
)
from .tensorSchema import Distribution

__all__ = [
    "GsConfig",
    "TcmConfig",
    "CostParams",
    "PatternDescriptor",
    "ConvGeometry",
    "ThresholdSpec",
    "Distribution",
    "PruneReport",
    "BenchReport",
    "MotivateReport",
    "StatsReport",
]
