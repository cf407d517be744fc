"""
Verification command: run the invariant suite on a stored or fresh model
"""

from pathlib import Path
from typing import Optional, Union

from rich.console import Console
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from ..core.config import ArchDescriptor
from ..model.nested import NestedModel, build_model
from ..numerics.tensor import no_grad
from ..slicing.serialize import load_nested
from ..verify.suite import CHECKS, VerificationReport, probe_inputs, run_suite


def fresh_model(arch: Union[str, ArchDescriptor], warmup: int = 32) -> NestedModel:
    """Seeded model whose running statistics have seen one training-mode batch"""
    model = build_model(ArchDescriptor.resolve(arch))
    if warmup:
        x, _ = probe_inputs(model, warmup, seed=model.descriptor.seed + 1)
        with no_grad():
            model.forward_grid(x, training=True)
    return model.freeze()


class VerifyCommands:
    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()

    def run(
        self,
        model_path: Optional[Union[str, Path]] = None,
        fresh: Optional[str] = None,
        inputs: int = 100,
        grad_samples: int = 64,
        selector_draws: int = 1000,
        seed: int = 0,
    ) -> VerificationReport:
        model = load_nested(model_path) if model_path else fresh_model(fresh or "toy4")
        with Progress(SpinnerColumn(), TextColumn("{task.description}"), console=self.console,
                      transient=True) as progress:
            task = progress.add_task("starting", total=len(CHECKS))

            def step(name: str) -> None:
                progress.update(task, description=f"checking {name}", advance=1)

            report = run_suite(model, inputs, grad_samples, selector_draws, seed, progress=step)
        self.display(report)
        return report

    def display(self, report: VerificationReport) -> None:
        table = Table(title="Verification report", show_header=True, header_style="bold magenta")
        table.add_column("Check", style="cyan")
        table.add_column("Result")
        table.add_column("Max error", justify="right")
        table.add_column("Detail", style="dim")
        for check in report.checks:
            result = "[green]pass[/green]" if check.passed else "[red]FAIL[/red]"
            table.add_row(check.name, result, f"{check.measured:.3g}", check.detail)
        self.console.print(table)
