"""Tensor and filter layout enumerations."""

from enum import Enum

import numpy as np


class ScalarKind(str, Enum):
    """Scalar kind of a dense tensor payload."""

    F32 = "f32"
    F16 = "f16"
    I16 = "i16"

    @property
    def fileCode(self) -> int:
        return {ScalarKind.F32: 0, ScalarKind.F16: 1, ScalarKind.I16: 2}[self]

    @property
    def numpyDtype(self) -> np.dtype:
        """Little-endian numpy dtype used on disk and in memory."""
        return np.dtype({"f32": "<f4", "f16": "<f2", "i16": "<i2"}[self.value])

    @classmethod
    def fromFileCode(cls, code: int) -> "ScalarKind":
        for kind in cls:
            if kind.fileCode == code:
                return kind
        raise ValueError(f"Unknown dtype code: {code}")


class ConvLayout(str, Enum):
    """Convolution filter layout (innermost dimension last)."""

    OHWI = "OhwI"
    OLI = "OLI"


class TensorKind(str, Enum):
    """Kind of tensor a GSSF file encodes."""

    MATRIX = "matrix"
    CONV1D = "conv1d"
    CONV2D = "conv2d"

    @property
    def fileCode(self) -> int:
        return {TensorKind.MATRIX: 0, TensorKind.CONV1D: 1, TensorKind.CONV2D: 2}[self]

    @classmethod
    def fromFileCode(cls, code: int) -> "TensorKind":
        for kind in cls:
            if kind.fileCode == code:
                return kind
        raise ValueError(f"Unknown tensor kind code: {code}")


class DistributionKind(str, Enum):
    """Synthetic generator distribution."""

    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"
