"""Dense tensor container, DTNS file codec and synthetic generators.

DTNS layout (little-endian): magic "DTNS" · version u16 = 1 · dtype u8
(0=f32, 1=f16, 2=i16) · rank u8 · rank × u32 extents · row-major payload.
"""

import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np
from loguru import logger

from .enums import DistributionKind, ScalarKind
from .schemas import Distribution

DTNS_MAGIC = b"DTNS"
DTNS_VERSION = 1
_HEADER = struct.Struct("<4sHBB")
MAX_RANK = 4
MAX_SEED = 2**64 - 1


class TensorFormatError(ValueError):
    """Raised for malformed tensors or DTNS files."""

    pass


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """
    Immutable row-major dense tensor of rank 1-4.

    `data` is a read-only numpy array whose dtype matches `dtype`.
    """

    dtype: ScalarKind
    shape: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self) -> None:
        if not 1 <= len(self.shape) <= MAX_RANK:
            raise TensorFormatError(f"rank must be 1..{MAX_RANK}, got {len(self.shape)}")
        if any(extent <= 0 for extent in self.shape):
            raise TensorFormatError(f"extents must be positive, got {self.shape}")
        if self.data.dtype != self.dtype.numpyDtype:
            raise TensorFormatError(
                f"payload dtype {self.data.dtype} does not match {self.dtype.value}"
            )
        if self.data.size != math.prod(self.shape):
            raise TensorFormatError(
                f"payload has {self.data.size} elements, shape {self.shape} "
                f"needs {math.prod(self.shape)}"
            )
        data = np.ascontiguousarray(self.data).reshape(self.shape)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def fromArray(
        cls, array: Any, dtype: ScalarKind = ScalarKind.F32
    ) -> "DenseTensor":
        """Build a tensor from any array-like, casting to `dtype`."""
        arr = np.array(array, dtype=dtype.numpyDtype, copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        return cls(dtype=dtype, shape=tuple(int(s) for s in arr.shape), data=arr)

    @property
    def rank(self) -> int:
        return len(self.shape)

    def toArray(self) -> np.ndarray:
        """32-bit float working copy (f16 and i16 are upconverted)."""
        return self.data.astype(np.float32)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return (
            self.dtype == other.dtype
            and self.shape == other.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    def __hash__(self) -> int:
        return hash((self.dtype, self.shape, self.data.tobytes()))


def asFloatArray(value: Union[DenseTensor, np.ndarray, Any]) -> np.ndarray:
    """float32 ndarray view of a tensor or array-like."""
    if isinstance(value, DenseTensor):
        return value.toArray()
    return np.asarray(value, dtype=np.float32)


def writeAtomic(path: Path, payload: bytes) -> None:
    """
    Write bytes through a temp file in the target directory, then rename.

    A failed write leaves no partial file at `path`.
    """
    writeAtomicAll([(path, payload)])


def writeAtomicAll(outputs: Sequence[tuple[Path, bytes]]) -> None:
    """
    Stage every payload in a temp file beside its target, then rename them
    all. Nothing is renamed unless every payload was staged.
    """
    staged: list[tuple[str, Path]] = []
    try:
        for path, payload in outputs:
            path = Path(path)
            directory = path.parent if str(path.parent) else Path(".")
            fd, tmpName = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
            staged.append((tmpName, path))
            with os.fdopen(fd, "wb") as f:
                f.write(payload)
        for tmpName, path in staged:
            os.replace(tmpName, path)
    except BaseException:
        for tmpName, _ in staged:
            if os.path.exists(tmpName):
                os.unlink(tmpName)
        raise


def encodeTensor(t: DenseTensor) -> bytes:
    """Serialize a tensor to DTNS bytes."""
    header = _HEADER.pack(DTNS_MAGIC, DTNS_VERSION, t.dtype.fileCode, t.rank)
    extents = struct.pack(f"<{t.rank}I", *t.shape)
    return header + extents + t.data.astype(t.dtype.numpyDtype, copy=False).tobytes()


def decodeTensor(blob: bytes) -> DenseTensor:
    """Parse DTNS bytes, naming the first failing field on error."""
    if len(blob) < _HEADER.size:
        raise TensorFormatError(f"header truncated: {len(blob)} bytes")
    magic, version, dtypeCode, rank = _HEADER.unpack_from(blob, 0)
    if magic != DTNS_MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}, expected {DTNS_MAGIC!r}")
    if version != DTNS_VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    try:
        dtype = ScalarKind.fromFileCode(dtypeCode)
    except ValueError:
        raise TensorFormatError(f"unsupported dtype code {dtypeCode}") from None
    if not 1 <= rank <= MAX_RANK:
        raise TensorFormatError(f"rank {rank} outside 1..{MAX_RANK}")

    offset = _HEADER.size
    if len(blob) < offset + 4 * rank:
        raise TensorFormatError("shape truncated")
    shape = struct.unpack_from(f"<{rank}I", blob, offset)
    offset += 4 * rank
    if any(extent == 0 for extent in shape):
        raise TensorFormatError(f"shape has a zero extent: {shape}")

    expected = math.prod(shape) * dtype.numpyDtype.itemsize
    payload = blob[offset:]
    if len(payload) < expected:
        raise TensorFormatError(
            f"payload truncated: {len(payload)} bytes, shape {shape} needs {expected}"
        )
    if len(payload) > expected:
        raise TensorFormatError(
            f"payload has {len(payload) - expected} trailing bytes after shape {shape}"
        )
    data = np.frombuffer(payload, dtype=dtype.numpyDtype).copy()
    return DenseTensor(dtype=dtype, shape=tuple(shape), data=data)


def saveTensor(t: DenseTensor, path: Path) -> None:
    """Write a tensor as a DTNS file."""
    if not isinstance(t.dtype, ScalarKind):
        raise TensorFormatError(f"unsupported dtype {t.dtype!r}")
    writeAtomic(Path(path), encodeTensor(t))
    logger.debug("Saved tensor | path={} shape={} dtype={}", path, t.shape, t.dtype.value)


def loadTensor(path: Path) -> DenseTensor:
    """Read a DTNS file."""
    blob = Path(path).read_bytes()
    try:
        return decodeTensor(blob)
    except TensorFormatError as e:
        raise TensorFormatError(f"{path}: {e}") from None


def parseShape(text: str) -> tuple[int, ...]:
    """Parse `1024x1024` style extents."""
    parts = [p.strip() for p in text.lower().split("x")]
    try:
        shape = tuple(int(p) for p in parts)
    except ValueError:
        raise TensorFormatError(f"malformed shape {text!r}") from None
    if not 1 <= len(shape) <= MAX_RANK:
        raise TensorFormatError(f"shape {text!r} must have 1..{MAX_RANK} extents")
    if any(extent <= 0 for extent in shape):
        raise TensorFormatError(f"shape {text!r} has a non-positive extent")
    return shape


def makeRng(seed: int) -> np.random.Generator:
    """
    Deterministic generator for a 64-bit seed.

    numpy's PCG64 seeded through SeedSequence(seed); fixed so that generated
    tensors are reproducible across runs and platforms.
    """
    if not 0 <= seed <= MAX_SEED:
        raise TensorFormatError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def genTensor(
    shape: tuple[int, ...],
    distribution: Distribution,
    seed: int,
    dtype: ScalarKind = ScalarKind.F32,
) -> DenseTensor:
    """
    Generate a deterministic synthetic tensor.

    Samples are drawn in float64 and rounded to `dtype`; i16 values are
    rounded to nearest and clipped to the int16 range.
    """
    if not 1 <= len(shape) <= MAX_RANK or any(extent <= 0 for extent in shape):
        raise TensorFormatError(f"invalid shape {shape}")

    rng = makeRng(seed)
    if distribution.kind == DistributionKind.UNIFORM:
        samples = rng.uniform(distribution.first, distribution.second, size=shape)
    else:
        samples = rng.normal(distribution.first, distribution.second, size=shape)

    if dtype == ScalarKind.I16:
        info = np.iinfo(np.int16)
        samples = np.clip(np.rint(samples), info.min, info.max)
    return DenseTensor.fromArray(samples, dtype=dtype)
