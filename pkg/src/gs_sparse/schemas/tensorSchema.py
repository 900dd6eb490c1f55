"""Tensor generator schema models."""

from pydantic import BaseModel, Field, model_validator

from ..enums import DistributionKind


class Distribution(BaseModel):
    """Synthetic value distribution: uniform(lo, hi) or gaussian(mean, std)."""

    kind: DistributionKind
    first: float = Field(description="lo for uniform, mean for gaussian")
    second: float = Field(description="hi for uniform, std for gaussian")

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def checkParameters(self) -> "Distribution":
        if self.kind == DistributionKind.UNIFORM and self.first > self.second:
            raise ValueError(f"uniform bounds reversed: {self.first} > {self.second}")
        if self.kind == DistributionKind.GAUSSIAN and self.second < 0:
            raise ValueError(f"gaussian std must be non-negative, got {self.second}")
        return self

    @classmethod
    def fromSpec(cls, text: str) -> "Distribution":
        """Parse `uniform:lo,hi` or `gaussian:mean,std`."""
        kindText, sep, params = text.partition(":")
        try:
            kind = DistributionKind(kindText.strip().lower())
        except ValueError:
            raise ValueError(f"Unknown distribution: {kindText!r}") from None

        if not sep:
            # uniform(0,1) or standard normal
            return cls(kind=kind, first=0.0, second=1.0)

        parts = [p.strip() for p in params.split(",")]
        if len(parts) != 2:
            raise ValueError(f"Distribution needs two parameters: {text!r}")
        try:
            first, second = float(parts[0]), float(parts[1])
        except ValueError:
            raise ValueError(f"Distribution parameters must be numbers: {text!r}") from None
        return cls(kind=kind, first=first, second=second)

    def toSpec(self) -> str:
        return f"{self.kind.value}:{self.first:g},{self.second:g}"
