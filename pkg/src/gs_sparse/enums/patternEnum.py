"""Sparsity pattern enumerations."""

from enum import Enum


class PatternFamily(str, Enum):
    """Sparsity pattern family."""

    GS_HYBRID = "gs"
    GS_SCATTER = "gs-scatter"
    BLOCK = "block"
    IRREGULAR = "irregular"

    @property
    def fileCode(self) -> int:
        """Family code stored in GSSF headers."""
        return _FAMILY_CODES[self]

    @classmethod
    def fromFileCode(cls, code: int) -> "PatternFamily":
        for family, familyCode in _FAMILY_CODES.items():
            if familyCode == code:
                return family
        raise ValueError(f"Unknown pattern family code: {code}")


_FAMILY_CODES = {
    PatternFamily.GS_HYBRID: 0,
    PatternFamily.GS_SCATTER: 1,
    PatternFamily.BLOCK: 2,
}


class ThresholdMode(str, Enum):
    """Where the pruning threshold comes from."""

    PER_MATRIX = "per-matrix"
    EXTERNAL = "external"


class CsrOrder(str, Enum):
    """Gather order for CSR rows in the bank-conflict model."""

    ASCENDING = "ascending"
    OPTIMAL_REORDER = "optimal-reorder"


class KernelKind(str, Enum):
    """Loop skeleton priced by the cycle estimator."""

    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"
    HYBRID = "hybrid"
    BLOCK_HORIZONTAL = "block-horizontal"
    BLOCK_VERTICAL = "block-vertical"
    DENSE = "dense"
