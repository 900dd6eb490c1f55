"""Pattern, convolution geometry and threshold schema models."""

import re
from typing import Optional

from pydantic import BaseModel, Field, model_validator

from ..enums import ConvLayout, PatternFamily, TensorKind, ThresholdMode

_PARAM_RE = re.compile(r"^\s*([A-Za-z_]+)\s*=\s*(-?\d+)\s*$")


class PatternDescriptor(BaseModel):
    """Sparsity family with its bank count B and elements-per-row k."""

    family: PatternFamily
    banks: int = Field(default=1, ge=1, description="Number of TCM sub-banks (B)")
    elemsPerRow: int = Field(
        default=1, ge=1, alias="elems_per_row", description="Elements per row per group (k)"
    )

    model_config = {"populate_by_name": True, "frozen": True}

    @model_validator(mode="after")
    def checkDivisor(self) -> "PatternDescriptor":
        if self.family != PatternFamily.IRREGULAR and self.banks % self.elemsPerRow:
            raise ValueError(
                f"k={self.elemsPerRow} must divide B={self.banks} for {self.family.value}"
            )
        return self

    @property
    def bandRows(self) -> int:
        """Rows per band (B/k)."""
        return self.banks // self.elemsPerRow

    @property
    def isHorizontal(self) -> bool:
        return self.elemsPerRow == self.banks

    @property
    def isVertical(self) -> bool:
        return self.elemsPerRow == 1

    def asHybrid(self) -> "PatternDescriptor":
        """Same B and k as a GS(B,k) hybrid descriptor."""
        return PatternDescriptor(
            family=PatternFamily.GS_HYBRID, banks=self.banks, elemsPerRow=self.elemsPerRow
        )

    @classmethod
    def fromSpec(cls, text: str) -> "PatternDescriptor":
        """
        Parse the CLI pattern grammar.

        Accepted forms: `gs:B=<int>,k=<int>`, `gs-scatter:B=<int>,k=<int>`,
        `block:B=<int>,k=<int>` and `irregular`.
        """
        familyText, sep, params = text.strip().partition(":")
        try:
            family = PatternFamily(familyText.strip().lower())
        except ValueError:
            raise ValueError(
                f"Unknown pattern family {familyText!r}; "
                "expected gs, gs-scatter, block or irregular"
            ) from None

        if family == PatternFamily.IRREGULAR:
            if sep and params.strip():
                raise ValueError("irregular takes no parameters")
            return cls(family=family)

        values: dict[str, int] = {}
        for part in params.split(","):
            match = _PARAM_RE.match(part)
            if match is None:
                raise ValueError(f"Malformed pattern parameter {part!r} in {text!r}")
            key = match.group(1)
            if key not in ("B", "k"):
                raise ValueError(f"Unknown pattern parameter {key!r}; expected B and k")
            values[key] = int(match.group(2))

        if set(values) != {"B", "k"}:
            raise ValueError(f"Pattern {text!r} needs both B and k")
        return cls(family=family, banks=values["B"], elemsPerRow=values["k"])

    def toSpec(self) -> str:
        if self.family == PatternFamily.IRREGULAR:
            return "irregular"
        return f"{self.family.value}:B={self.banks},k={self.elemsPerRow}"


class ConvGeometry(BaseModel):
    """Filter extents plus the activation width the filter is bound to."""

    layout: ConvLayout = ConvLayout.OHWI
    outChannels: int = Field(ge=1, alias="out_channels")
    kernelH: int = Field(default=1, ge=1, alias="kernel_h")
    kernelW: int = Field(ge=1, alias="kernel_w")
    inChannels: int = Field(ge=1, alias="in_channels")
    actWidth: int = Field(ge=1, alias="act_width")
    actChannels: int = Field(ge=1, alias="act_channels")

    model_config = {"populate_by_name": True, "frozen": True}

    @model_validator(mode="after")
    def checkGeometry(self) -> "ConvGeometry":
        if self.layout == ConvLayout.OLI and self.kernelH != 1:
            raise ValueError(f"OLI filters have kernel_h == 1, got {self.kernelH}")
        if self.actChannels != self.inChannels:
            raise ValueError(
                f"act_channels ({self.actChannels}) must equal in_channels ({self.inChannels})"
            )
        if self.actWidth < self.kernelW:
            raise ValueError(
                f"act_width ({self.actWidth}) is narrower than kernel_w ({self.kernelW})"
            )
        return self

    @property
    def flatCols(self) -> int:
        """Column count of the flattened filter (hwI or LI)."""
        return self.kernelH * self.kernelW * self.inChannels

    @property
    def filterShape(self) -> tuple[int, ...]:
        if self.layout == ConvLayout.OLI:
            return (self.outChannels, self.kernelW, self.inChannels)
        return (self.outChannels, self.kernelH, self.kernelW, self.inChannels)

    @property
    def tensorKind(self) -> TensorKind:
        return TensorKind.CONV1D if self.layout == ConvLayout.OLI else TensorKind.CONV2D

    @classmethod
    def fromFilterShape(cls, shape: tuple[int, ...], actWidth: int) -> "ConvGeometry":
        """Geometry for an O×h×w×I (rank 4) or O×L×I (rank 3) filter."""
        if len(shape) == 4:
            o, h, w, i = shape
            return cls(
                layout=ConvLayout.OHWI,
                outChannels=o,
                kernelH=h,
                kernelW=w,
                inChannels=i,
                actWidth=actWidth,
                actChannels=i,
            )
        if len(shape) == 3:
            o, length, i = shape
            return cls(
                layout=ConvLayout.OLI,
                outChannels=o,
                kernelH=1,
                kernelW=length,
                inChannels=i,
                actWidth=actWidth,
                actChannels=i,
            )
        raise ValueError(f"Filter must be rank 3 or 4, got shape {shape}")


class ThresholdSpec(BaseModel):
    """Pruning threshold: derived per matrix from sparsity, or supplied externally."""

    mode: ThresholdMode = ThresholdMode.PER_MATRIX
    sparsity: float = Field(default=0.0, ge=0.0, le=1.0)
    externalThreshold: Optional[float] = Field(
        default=None, ge=0.0, alias="external_threshold"
    )

    model_config = {"populate_by_name": True, "frozen": True}

    @model_validator(mode="after")
    def checkExternal(self) -> "ThresholdSpec":
        if self.mode == ThresholdMode.EXTERNAL and self.externalThreshold is None:
            raise ValueError("external threshold mode requires external_threshold")
        return self
