"""Enums for GS Sparse."""

from .logFormatEnum import LogFormat, ReportFormat
from .patternEnum import CsrOrder, KernelKind, PatternFamily, ThresholdMode
from .tensorEnum import ConvLayout, DistributionKind, ScalarKind, TensorKind

__all__ = [
    "LogFormat",
    "ReportFormat",
    "PatternFamily",
    "ThresholdMode",
    "CsrOrder",
    "KernelKind",
    "ScalarKind",
    "TensorKind",
    "ConvLayout",
    "DistributionKind",
]
