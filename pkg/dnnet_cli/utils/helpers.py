"""
Helper functions for dnnet-cli
"""

from typing import Any, Dict, Optional, Sequence

import numpy as np
from rich.console import Console
from rich.markup import escape
from rich.table import Table


console = Console()


def display_grid(title: str, grid: np.ndarray, fmt: str = "{:.3f}",
                 highlight: Optional[Sequence[int]] = None, signed: bool = False) -> None:
    """Display an L x C grid with rows d=1..L and columns w=1..C"""
    table = Table(title=title)
    table.add_column("d \\ w", style="cyan", justify="right")
    for c in range(grid.shape[1]):
        table.add_column(f"w{c + 1}", justify="right")

    for l in range(grid.shape[0]):
        cells = []
        for c in range(grid.shape[1]):
            text = fmt.format(grid[l, c])
            if signed and grid[l, c] > 0:
                text = f"[red]{text}[/red]"
            elif signed and grid[l, c] < 0:
                text = f"[blue]{text}[/blue]"
            if highlight is not None and (l + 1, c + 1) == tuple(highlight):
                text = f"[bold green]{text}[/bold green]"
            cells.append(text)
        table.add_row(f"d{l + 1}", *cells)

    console.print(table)


def display_config_info(config_dict: Dict[str, Any]) -> None:
    """Display configuration information"""
    console.print("\n[bold blue]Resolved Configuration:[/bold blue]")

    for section, settings in config_dict.items():
        if not isinstance(settings, dict):
            console.print(f"\n[bold cyan]{section}:[/bold cyan] {settings}")
            continue
        console.print(f"\n[bold cyan]{section.title()}:[/bold cyan]")
        for key, value in settings.items():
            console.print(f"  {key}: {value}")


def format_count(value: float) -> str:
    """Compact human form of a MAC or parameter count"""
    for unit, scale in (("G", 1e9), ("M", 1e6), ("K", 1e3)):
        if abs(value) >= scale:
            return f"{value / scale:.2f}{unit}"
    return f"{int(value)}"


def display_error(error_message: str) -> None:
    """Display error message"""
    console.print(f"[red]Error: {escape(error_message)}[/red]")


def display_success(success_message: str) -> None:
    """Display success message"""
    console.print(f"[green]✓ {escape(success_message)}[/green]")


def display_warning(warning_message: str) -> None:
    """Display warning message"""
    console.print(f"[yellow]⚠ {escape(warning_message)}[/yellow]")

