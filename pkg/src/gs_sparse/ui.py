"""Rich UI components for terminal output."""

from typing import Any

from rich.console import Console
from rich.table import Table
from rich.text import Text

from .schemas import BenchReport, MotivateReport, PruneReport, StatsReport

console = Console()
errConsole = Console(stderr=True)


def printSuccessMessage(message: str) -> None:
    """Print a success message."""
    console.print(f"[bold green]✓[/] {message}")


def printErrorMessage(message: str) -> None:
    """Print a one-line error message to stderr."""
    errConsole.print(Text.assemble(("✗ ", "bold red"), message), soft_wrap=True)


def _propertyTable(title: str) -> Table:
    table = Table(
        title=title,
        show_header=True,
        header_style="bold cyan",
        border_style="dim",
    )
    table.add_column("Property", style="dim")
    table.add_column("Value")
    return table


def _formatValue(value: Any) -> str:
    if isinstance(value, bool):
        return "[green]true[/]" if value else "[red]false[/]"
    if value is None:
        return "[dim]n/a[/]"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def printPruneReport(report: PruneReport) -> None:
    table = _propertyTable("Prune")
    table.add_row("Pattern", report.pattern)
    table.add_row("Shape", f"{report.rows}x{report.cols}")
    table.add_row("Requested sparsity", _formatValue(report.requestedSparsity))
    table.add_row("Realized sparsity", _formatValue(report.realizedSparsity))
    table.add_row("Kept magnitude", _formatValue(report.keptMagnitude))
    table.add_row("Groups", str(report.groupCount))
    table.add_row("Threshold", _formatValue(report.threshold))
    console.print(table)


def printBenchReport(report: BenchReport) -> None:
    """Print cycle estimate and access counts."""
    table = _propertyTable("Cost estimate")
    table.add_row("Pattern", report.pattern)
    table.add_row("Cycles", str(report.cycles))
    table.add_row("Dense cycles", str(report.denseCycles))
    speedupStyle = "bold green" if report.speedup > 1 else "yellow"
    table.add_row("Speedup", Text(f"{report.speedup:.2f}x", style=speedupStyle))
    table.add_row("Serialized accesses", str(report.serializedAccesses))
    table.add_row("Ideal accesses", str(report.idealAccesses))
    console.print(table)


def printMotivateReport(report: MotivateReport) -> None:
    table = _propertyTable("CSR bank conflicts")
    table.add_row("Shape", f"{report.m}x{report.n}")
    table.add_row("Sparsity", _formatValue(report.sparsity))
    table.add_row("Banks", str(report.banks))
    table.add_row("Trials", str(report.trials))
    table.add_row("Ascending ratio", f"{report.ascendingRatio:.3f}x")
    table.add_row("Reorder ratio", f"{report.reorderRatio:.3f}x")
    console.print(table)


def printStatsReport(report: StatsReport) -> None:
    """Print validation outcome and residue histogram."""
    table = _propertyTable(f"Stats: {report.source}")
    table.add_row("Pattern", report.pattern)
    valid = Text("yes", style="bold green") if report.valid else Text("no", style="bold red")
    table.add_row("Valid", valid)
    if report.detail:
        table.add_row("Detail", report.detail)
    table.add_row("Non-zeros", str(report.nnz))
    if report.groupCount is not None:
        table.add_row("Groups", str(report.groupCount))
    table.add_row("Residues", " ".join(str(v) for v in report.residueHistogram))
    console.print(table)


def printConfigTable(config: dict[str, Any], title: str = "Configuration") -> None:
    """Print configuration as a table."""
    table = Table(
        title=title,
        show_header=True,
        header_style="bold cyan",
        border_style="dim",
    )

    table.add_column("Key", style="cyan")
    table.add_column("Value")

    for key, value in config.items():
        valueStr = "[dim]default[/]" if value is None else _formatValue(value)
        table.add_row(key, valueStr)

    console.print(table)
