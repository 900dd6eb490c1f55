"""CLI entry point using Typer."""

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
import typer
from loguru import logger

from . import __version__
from .config import getConfigSummary, loadConfig, parseParams
from .enums import LogFormat, PatternFamily, ReportFormat, ScalarKind, ThresholdMode
from .gsFormat import decodeArray, encode, encodeGssf, groupMask, loadGssf, saveGssf
from .kernels import KernelTrace, loadTrace, saveTrace, sparseConv, spmm, spmv
from .logs import setupLogging
from .patterns import (
    ValidationReport,
    flattenConv,
    residueHistogram,
    toMask,
    validateBlockMask,
    validateGsMask,
)
from .pruner import keptMagnitude, padRows, prunePattern, realizedSparsity
from .schemas import (
    BenchReport,
    ConvGeometry,
    Distribution,
    GsConfig,
    MotivateReport,
    PatternDescriptor,
    PruneReport,
    StatsReport,
    ThresholdSpec,
)
from .tcmModel import (
    AccessReport,
    accessRatioExperiment,
    accessRatioFromMask,
    accessReportFor,
    estimateCycles,
    traceCost,
    workloadFromDescriptor,
    workloadFromMatrix,
)
from .tensorIo import (
    MAX_SEED,
    DenseTensor,
    encodeTensor,
    genTensor,
    loadTensor,
    parseShape,
    saveTensor,
    writeAtomicAll,
)
from .ui import (
    console,
    printBenchReport,
    printConfigTable,
    printErrorMessage,
    printMotivateReport,
    printPruneReport,
    printStatsReport,
    printSuccessMessage,
)

FORMATS_HELP = """
[bold]File formats[/] (little-endian):

• DTNS dense tensor: "DTNS" · version u16 · dtype u8 (0=f32, 1=f16, 2=i16) · rank u8 · rank × u32 extents · row-major payload.

• GSSF GS matrix: "GSSF" · version u16 · family u8 (0=gs, 1=gs-scatter, 2=block) · B u16 · k u16 · kind u8 (0=matrix, 1=conv1d, 2=conv2d) · m u32 · n u32 · \\[conv: O,h,w,I,W_act,C u32] · group_count u32 · indptr · indices u32 · values f32 · \\[scatter: row_perm u32].

• Trace: group_count u32, then one row of u32 offsets per gather.

• JSON reports carry "schema": 1 with snake_case fields.
"""

app = typer.Typer(
    name="gs",
    help="GS Sparse - gather-scatter balanced sparsity toolkit",
    epilog=FORMATS_HELP,
    add_completion=False,
    rich_markup_mode="rich",
)
runApp = typer.Typer(help="Run reference kernels on GSSF weights")
app.add_typer(runApp, name="run")


@dataclass
class CliState:
    """Global options shared by every command."""

    seed: int = 0
    quiet: bool = False
    asJson: bool = False
    config: GsConfig = field(default_factory=GsConfig)


def _state(ctx: typer.Context) -> CliState:
    root = ctx.find_root()
    if isinstance(root.obj, CliState):
        return root.obj
    return CliState()


@contextmanager
def _domainErrors() -> Iterator[None]:
    """Report domain failures on one line and exit 1."""
    try:
        yield
    except (ValueError, OSError) as e:
        logger.debug("Command failed | error={!r}", e)
        printErrorMessage(str(e))
        raise typer.Exit(1)


def _parsePattern(text: str, hint: str = "--pattern") -> PatternDescriptor:
    try:
        return PatternDescriptor.fromSpec(text)
    except ValueError as e:
        raise typer.BadParameter(str(e).splitlines()[0], param_hint=hint) from None


def _parsePair(text: str, hint: str, minimum: int) -> tuple[int, int]:
    parts = [p.strip() for p in text.split(",")]
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise typer.BadParameter(f"expected two integers like 1,1, got {text!r}", param_hint=hint)
    if len(values) == 1:
        values = values * 2
    if len(values) != 2 or any(v < minimum for v in values):
        raise typer.BadParameter(f"expected two integers >= {minimum}, got {text!r}", param_hint=hint)
    return values[0], values[1]


def _done(state: CliState, asJson: bool, message: str) -> None:
    if not (asJson or state.quiet):
        printSuccessMessage(message)


def _loadWeights(path: Path, actWidth: Optional[int]) -> tuple[np.ndarray, Optional[ConvGeometry]]:
    """Weights as a matrix; conv filters are flattened to O×(hwI)."""
    tensor = loadTensor(path)
    if tensor.rank == 2:
        return tensor.toArray(), None
    if tensor.rank in (3, 4):
        geometry = ConvGeometry.fromFilterShape(tensor.shape, actWidth or tensor.shape[-2])
        return flattenConv(geometry).flatten(tensor.toArray()), geometry
    raise ValueError(f"{path}: weights must be a matrix or a conv filter, got rank {tensor.rank}")


def _requireActWidth(conv: Optional[ConvGeometry], actWidth: Optional[int]) -> None:
    if conv is not None and actWidth is None:
        raise ValueError("conv filters need --act-width to bind gather offsets")


def _loadMask(path: Path) -> np.ndarray:
    tensor = loadTensor(path)
    if tensor.rank != 2:
        raise ValueError(f"{path}: mask must be 2-D, got rank {tensor.rank}")
    return toMask(tensor.toArray() != 0)


def versionCallback(value: bool) -> None:
    """Print version and exit."""
    if value:
        console.print(f"GS Sparse v{__version__}")
        raise typer.Exit()


@app.callback()
def main(
    ctx: typer.Context,
    version: Optional[bool] = typer.Option(
        None,
        "--version",
        "-v",
        callback=versionCallback,
        is_eager=True,
        help="Show version and exit",
    ),
    seed: int = typer.Option(0, "--seed", min=0, max=MAX_SEED, help="Default 64-bit seed"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Only report errors"),
    json_output: bool = typer.Option(False, "--json", help="Print reports as JSON"),
    log_level: Optional[str] = typer.Option(None, "--log-level", "-l", help="Log level"),
    log_format: Optional[LogFormat] = typer.Option(
        None, "--log-format", help="Log format: pretty or json"
    ),
) -> None:
    """GS Sparse - prune, encode, run and price gather-scatter sparse weights."""
    with _domainErrors():
        config = loadConfig(cliArgs={"log_level": log_level, "log_format": log_format})
        setupLogging(config.logFormat, config.logLevel, quiet)
    ctx.obj = CliState(seed=seed, quiet=quiet, asJson=json_output, config=config)


@app.command()
def gen(
    ctx: typer.Context,
    shape: str = typer.Option(..., "--shape", "-s", help="Extents, e.g. 1024x1024"),
    dist: str = typer.Option(
        "uniform:-1,1", "--dist", "-d", help="uniform:lo,hi or gaussian:mean,std"
    ),
    dtype: ScalarKind = typer.Option(ScalarKind.F32, "--dtype", help="Scalar kind"),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, max=MAX_SEED, help="Seed"),
    output: Path = typer.Option(..., "--output", "-o", help="Output DTNS file"),
) -> None:
    """Generate a deterministic synthetic tensor."""
    state = _state(ctx)
    with _domainErrors():
        tensor = genTensor(
            parseShape(shape),
            Distribution.fromSpec(dist),
            state.seed if seed is None else seed,
            dtype,
        )
        saveTensor(tensor, output)
    _done(state, state.asJson, f"Wrote {output} ({shape}, {dtype.value})")


@app.command()
def prune(
    ctx: typer.Context,
    input_path: Path = typer.Option(..., "--input", "-i", help="Weights DTNS (matrix or filter)"),
    pattern: str = typer.Option(..., "--pattern", "-p", help="gs:B=,k= | gs-scatter:B=,k= | block:B=,k= | irregular"),
    sparsity: float = typer.Option(0.0, "--sparsity", min=0.0, max=1.0, help="Target sparsity"),
    threshold: Optional[float] = typer.Option(
        None, "--threshold", min=0.0, help="External magnitude threshold"
    ),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Output GSSF file"),
    mask_out: Optional[Path] = typer.Option(None, "--mask-out", help="Output mask DTNS file"),
    pad_rows: bool = typer.Option(False, "--pad-rows", help="Zero-pad m to a multiple of B/k"),
    act_width: Optional[int] = typer.Option(
        None, "--act-width", min=1, help="Activation width for conv filters"
    ),
    report_format: Optional[ReportFormat] = typer.Option(None, "--report", help="text or json"),
    json_output: bool = typer.Option(False, "--json", help="Print the report as JSON"),
) -> None:
    """Prune weights to a sparsity pattern."""
    state = _state(ctx)
    if report_format is None:
        asJson = json_output or state.asJson
    else:
        asJson = report_format == ReportFormat.JSON
    desc = _parsePattern(pattern)
    if output is not None and (
        desc.family == PatternFamily.IRREGULAR
        or (desc.family == PatternFamily.BLOCK and not desc.isHorizontal)
    ):
        raise typer.BadParameter(
            f"{desc.toSpec()} masks have no GSSF encoding; write them with --mask-out",
            param_hint="--output",
        )

    with _domainErrors():
        w, conv = _loadWeights(input_path, act_width)
        if output is not None:
            _requireActWidth(conv, act_width)
        if pad_rows and desc.family != PatternFamily.IRREGULAR:
            if conv is not None:
                raise ValueError("--pad-rows applies to matrices only")
            w = padRows(w, desc.bandRows)

        if threshold is not None:
            spec = ThresholdSpec(mode=ThresholdMode.EXTERNAL, externalThreshold=threshold)
        else:
            spec = ThresholdSpec(sparsity=sparsity)
        outcome = prunePattern(w, desc, spec)

        # both payloads are staged before either file is replaced
        outputs: list[tuple[Path, bytes]] = []
        if output is not None and outcome.grouped is not None:
            outputs.append((output, encodeGssf(encode(w, outcome.grouped, conv))))
        if mask_out is not None:
            mask = DenseTensor.fromArray(outcome.mask.astype(np.float32))
            outputs.append((mask_out, encodeTensor(mask)))
        writeAtomicAll(outputs)
        for path, _ in outputs:
            logger.info("Wrote {}", path)

    report = PruneReport(
        pattern=desc.toSpec(),
        rows=w.shape[0],
        cols=w.shape[1],
        requestedSparsity=sparsity,
        realizedSparsity=realizedSparsity(outcome.mask),
        keptMagnitude=keptMagnitude(w, outcome.mask),
        groupCount=outcome.groupCount,
        threshold=None if math.isinf(outcome.threshold) else outcome.threshold,
    )
    if asJson:
        typer.echo(report.toJsonStr())
    elif not state.quiet:
        printPruneReport(report)


@app.command("encode")
def encodeCmd(
    ctx: typer.Context,
    input_path: Path = typer.Option(..., "--input", "-i", help="Weights DTNS"),
    mask_path: Path = typer.Option(..., "--mask", "-m", help="Mask DTNS (non-zero = kept)"),
    pattern: str = typer.Option(..., "--pattern", "-p", help="gs:B=,k= or block:B=,k=B"),
    output: Path = typer.Option(..., "--output", "-o", help="Output GSSF file"),
    act_width: Optional[int] = typer.Option(
        None, "--act-width", min=1, help="Activation width for conv filters"
    ),
) -> None:
    """Group a valid mask and encode the masked weights as GSSF."""
    state = _state(ctx)
    desc = _parsePattern(pattern)
    if desc.family == PatternFamily.GS_SCATTER:
        raise typer.BadParameter(
            "gs-scatter row order is chosen by `gs prune`; use its --output instead",
            param_hint="--pattern",
        )

    with _domainErrors():
        w, conv = _loadWeights(input_path, act_width)
        _requireActWidth(conv, act_width)
        mask = _loadMask(mask_path)
        if mask.shape != w.shape:
            raise ValueError(f"mask shape {mask.shape} does not match weights {w.shape}")
        matrix = encode(w, groupMask(mask, desc), conv)
        saveGssf(matrix, output)
    _done(state, state.asJson, f"Encoded {matrix.groupCount} groups to {output}")


@app.command("decode")
def decodeCmd(
    ctx: typer.Context,
    input_path: Path = typer.Option(..., "--input", "-i", help="GSSF file"),
    output: Path = typer.Option(..., "--output", "-o", help="Output DTNS file"),
) -> None:
    """Decode GSSF to dense masked weights (filter-shaped for conv)."""
    state = _state(ctx)
    with _domainErrors():
        matrix = loadGssf(input_path)
        dense = decodeArray(matrix)
        if matrix.conv is not None:
            dense = flattenConv(matrix.conv).unflatten(dense)
        saveTensor(DenseTensor.fromArray(dense), output)
    _done(state, state.asJson, f"Decoded {input_path} to {output}")


@app.command()
def stats(
    ctx: typer.Context,
    gssf: Optional[Path] = typer.Option(None, "--gssf", help="GSSF file to inspect"),
    mask_path: Optional[Path] = typer.Option(None, "--mask", "-m", help="Mask DTNS to validate"),
    pattern: Optional[str] = typer.Option(None, "--pattern", "-p", help="Pattern for --mask"),
    json_output: bool = typer.Option(False, "--json", help="Print the report as JSON"),
) -> None:
    """Validate a mask against a pattern, or summarize a GSSF file."""
    state = _state(ctx)
    asJson = json_output or state.asJson
    if (gssf is None) == (mask_path is None):
        raise typer.BadParameter("give exactly one of --gssf or --mask", param_hint="--gssf")
    desc = None
    if mask_path is not None:
        if pattern is None:
            raise typer.BadParameter("--mask needs --pattern", param_hint="--pattern")
        desc = _parsePattern(pattern)
        if desc.family == PatternFamily.GS_SCATTER:
            raise typer.BadParameter(
                "gs-scatter masks need their row order; inspect the GSSF file instead",
                param_hint="--pattern",
            )

    with _domainErrors():
        if gssf is not None:
            matrix = loadGssf(gssf)
            hist = np.bincount(
                (matrix.indices.astype(np.int64) % matrix.banks).ravel(), minlength=matrix.banks
            )
            report = StatsReport(
                source=str(gssf),
                pattern=matrix.pattern.toSpec(),
                valid=True,
                residueHistogram=[int(v) for v in hist],
                groupCount=matrix.groupCount,
                nnz=matrix.groupCount * matrix.banks,
            )
        else:
            assert desc is not None and mask_path is not None
            mask = _loadMask(mask_path)
            if desc.family == PatternFamily.GS_HYBRID:
                result = validateGsMask(mask, desc)
            elif desc.family == PatternFamily.BLOCK:
                result = validateBlockMask(mask, desc)
            else:
                result = ValidationReport.ok(residueHistogram(mask, desc.banks))
            report = StatsReport(
                source=str(mask_path),
                pattern=desc.toSpec(),
                valid=result.valid,
                detail=result.detail,
                band=result.band,
                row=result.row,
                residue=result.residue,
                residueHistogram=result.residueHistogram,
                nnz=int(mask.sum()),
            )

    if asJson:
        typer.echo(report.toJsonStr())
    elif not state.quiet:
        printStatsReport(report)
    if not report.valid:
        raise typer.Exit(1)


@runApp.command("spmv")
def runSpmv(
    ctx: typer.Context,
    weights: Path = typer.Option(..., "--weights", "-w", help="GSSF weights"),
    act: Path = typer.Option(..., "--act", "-x", help="Activation DTNS (vector or N×n batch)"),
    output: Path = typer.Option(..., "--output", "-o", help="Output DTNS file"),
    trace: Optional[Path] = typer.Option(None, "--trace", help="Write the gather trace"),
) -> None:
    """Sparse matrix × dense vector (or batch of vectors)."""
    state = _state(ctx)
    with _domainErrors():
        matrix = loadGssf(weights)
        activation = loadTensor(act)
        recorder = KernelTrace(lanes=matrix.banks) if trace is not None else None
        if activation.rank == 1:
            result = spmv(matrix, activation.toArray(), recorder)
        elif activation.rank == 2:
            result = spmm(matrix, activation.toArray(), recorder)
        else:
            raise ValueError(f"{act}: activation must be rank 1 or 2, got rank {activation.rank}")
        saveTensor(DenseTensor.fromArray(result), output)
        if recorder is not None and trace is not None:
            saveTrace(recorder, trace)
    _done(state, state.asJson, f"Wrote {output} {result.shape}")


@runApp.command("conv")
def runConv(
    ctx: typer.Context,
    weights: Path = typer.Option(..., "--weights", "-w", help="GSSF conv weights"),
    act: Path = typer.Option(..., "--act", "-x", help="Activation DTNS (H×W×C or W×C)"),
    stride: str = typer.Option("1,1", "--stride", help="Stride sh,sw"),
    pad: str = typer.Option("0,0", "--pad", help="Zero padding ph,pw"),
    output: Path = typer.Option(..., "--output", "-o", help="Output DTNS file"),
    trace: Optional[Path] = typer.Option(None, "--trace", help="Write the gather trace"),
) -> None:
    """Sparse convolution with a conv-bound GSSF filter."""
    state = _state(ctx)
    strides = _parsePair(stride, "--stride", 1)
    padding = _parsePair(pad, "--pad", 0)
    with _domainErrors():
        matrix = loadGssf(weights)
        recorder = KernelTrace(lanes=matrix.banks) if trace is not None else None
        result = sparseConv(matrix, loadTensor(act).toArray(), strides, padding, recorder)
        saveTensor(DenseTensor.fromArray(result), output)
        if recorder is not None and trace is not None:
            saveTrace(recorder, trace)
    _done(state, state.asJson, f"Wrote {output} {result.shape}")


@app.command()
def bench(
    ctx: typer.Context,
    gssf: Optional[Path] = typer.Option(None, "--gssf", help="Encoded weights to price"),
    shape: Optional[str] = typer.Option(None, "--shape", help="MxN for a synthetic workload"),
    pattern: Optional[str] = typer.Option(None, "--pattern", "-p", help="Pattern for --shape"),
    sparsity: float = typer.Option(0.0, "--sparsity", min=0.0, max=1.0, help="Sparsity for --shape"),
    params: Optional[list[str]] = typer.Option(
        None, "--params", help="Cost overrides key=value (repeatable or comma-separated)"
    ),
    pixels: int = typer.Option(1, "--pixels", min=1, help="Output pixels (conv)"),
    trace: Optional[Path] = typer.Option(None, "--trace", help="Price a recorded gather trace"),
    report_format: Optional[ReportFormat] = typer.Option(None, "--report", help="text or json"),
    json_output: bool = typer.Option(False, "--json", help="Print the report as JSON"),
) -> None:
    """Estimate kernel cycles and TCM accesses against the dense kernel."""
    state = _state(ctx)
    if report_format is None:
        asJson = json_output or state.asJson
    else:
        asJson = report_format == ReportFormat.JSON
    try:
        overrides = parseParams(params)
    except ValueError as e:
        raise typer.BadParameter(str(e), param_hint="--params") from None

    desc = None
    if gssf is None:
        if shape is None or pattern is None:
            raise typer.BadParameter("give --gssf, or --shape with --pattern", param_hint="--gssf")
        desc = _parsePattern(pattern)
    elif shape is not None or pattern is not None:
        raise typer.BadParameter("--gssf excludes --shape and --pattern", param_hint="--gssf")

    with _domainErrors():
        config = loadConfig(cliArgs=overrides)
        if gssf is not None:
            matrix = loadGssf(gssf)
            workload = workloadFromMatrix(matrix, pixels)
            tcm = config.tcm.model_copy(update={"banks": matrix.banks})
            access = accessReportFor(matrix, tcm, pixels)
            label = matrix.pattern.toSpec()
        else:
            assert desc is not None and shape is not None
            extents = parseShape(shape)
            if len(extents) != 2:
                raise ValueError(f"--shape must be MxN, got {shape!r}")
            workload = workloadFromDescriptor(desc, extents[0], extents[1], sparsity, pixels)
            tcm = config.tcm.model_copy(update={"banks": desc.banks})
            gathers = workload.groups * pixels
            access = AccessReport(
                totalGathers=gathers, serializedAccesses=gathers, idealAccesses=gathers
            )
            label = desc.toSpec()
        if trace is not None:
            access = traceCost(loadTrace(trace), tcm)
        estimate = estimateCycles(workload, tcm, config.cost)

    report = BenchReport(
        pattern=label,
        cycles=estimate.cycles,
        denseCycles=estimate.denseCycles,
        speedup=estimate.speedup,
        serializedAccesses=access.serializedAccesses,
        idealAccesses=access.idealAccesses,
    )
    if asJson:
        typer.echo(report.toJsonStr())
    elif not state.quiet:
        printBenchReport(report)


@app.command()
def motivate(
    ctx: typer.Context,
    m: int = typer.Option(1024, "--m", min=1, help="Rows"),
    n: int = typer.Option(1024, "--n", min=1, help="Columns"),
    sparsity: float = typer.Option(0.9, "--sparsity", help="Mask sparsity in (0, 1)"),
    banks: int = typer.Option(16, "--banks", "-b", min=1, help="TCM sub-banks (B)"),
    trials: int = typer.Option(10, "--trials", min=1, help="Monte-Carlo trials"),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, max=MAX_SEED, help="Seed"),
    mask_path: Optional[Path] = typer.Option(
        None, "--mask", help="Use this mask instead of random ones"
    ),
    json_output: bool = typer.Option(False, "--json", help="Print the report as JSON"),
) -> None:
    """CSR gather accesses relative to a perfectly balanced pattern."""
    state = _state(ctx)
    asJson = json_output or state.asJson
    with _domainErrors():
        if mask_path is not None:
            mask = _loadMask(mask_path)
            ratios = accessRatioFromMask(mask, banks)
            report = MotivateReport(
                m=mask.shape[0],
                n=mask.shape[1],
                sparsity=realizedSparsity(mask),
                banks=banks,
                trials=1,
                ascendingRatio=ratios.ascendingRatio,
                reorderRatio=ratios.reorderRatio,
            )
        else:
            runSeed = state.seed if seed is None else seed
            ratios = accessRatioExperiment(m, n, sparsity, banks, trials, runSeed)
            report = MotivateReport(
                m=m,
                n=n,
                sparsity=sparsity,
                banks=banks,
                trials=trials,
                seed=runSeed,
                ascendingRatio=ratios.ascendingRatio,
                reorderRatio=ratios.reorderRatio,
            )

    if asJson:
        typer.echo(report.toJsonStr())
    elif not state.quiet:
        printMotivateReport(report)


@app.command("config")
def showConfig(
    ctx: typer.Context,
    json_output: bool = typer.Option(False, "--json", help="Print as JSON"),
) -> None:
    """Show the effective merged configuration."""
    state = _state(ctx)
    if json_output or state.asJson:
        typer.echo(state.config.model_dump_json(by_alias=True))
    else:
        printConfigTable(getConfigSummary(state.config))


if __name__ == "__main__":
    app()
