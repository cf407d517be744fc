"""
Training command: build, train, freeze and store a nested model
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn

from ..core.config import RunConfig
from ..data import load_datasets
from ..model.nested import build_model
from ..slicing.serialize import save
from ..training.trainer import TrainResult, train
from ..training.weights import weights_from_config
from ..utils.helpers import display_grid, display_success, format_count
from ..utils.logging import get_logger
from ..utils.tables import write_grid_csv

logger = get_logger(__name__)

MODEL_FILE = "model.dnnt"
METRICS_FILE = "metrics.csv"
ACCURACY_FILE = "accuracy_grid.csv"


@dataclass
class TrainArtifacts:
    model_path: Path
    metrics_path: Path
    accuracy_path: Path
    config_path: Path
    result: TrainResult


class TrainCommands:
    """Runs `dnnet train` for one resolved configuration"""

    def __init__(self, config: RunConfig, console: Optional[Console] = None):
        self.config = config.resolve()
        self.console = console or Console()

    def run(self, show_progress: bool = True) -> TrainArtifacts:
        config = self.config
        if config.arch.precision != config.train.precision:
            logger.info("Building the model in %s (train.precision) instead of %s",
                        config.train.precision, config.arch.precision)
            config.arch.precision = config.train.precision
        out = config.output_path
        out.mkdir(parents=True, exist_ok=True)
        config_path = config.echo()

        model = build_model(config.arch)
        weights = weights_from_config(config.weights, model.L, model.C)
        train_set, test_set = load_datasets(config.data, config.arch)
        self.console.print(
            f"[bold blue]Training[/bold blue] {model.L}x{model.C} heads, "
            f"{format_count(model.num_parameters())} parameters, lambda [cyan]{weights.describe()}[/cyan]"
        )

        if show_progress and config.train.steps > 0:
            with Progress(
                SpinnerColumn(),
                TextColumn("[progress.description]{task.description}"),
                BarColumn(),
                TextColumn("{task.completed}/{task.total}"),
                TimeElapsedColumn(),
                console=self.console,
                transient=True,
            ) as progress:
                task = progress.add_task("loss -", total=config.train.steps)

                def update(step: int, loss: float) -> None:
                    progress.update(task, completed=step, description=f"loss {loss:.4f}")

                result = train(model, train_set, config.train, weights, eval_data=test_set,
                               flip=config.data.flip, crop_pad=config.data.crop_pad, callback=update)
        else:
            result = train(model, train_set, config.train, weights, eval_data=test_set,
                           flip=config.data.flip, crop_pad=config.data.crop_pad)

        model.freeze()
        model_path = save(model, out / MODEL_FILE)
        metrics_path = result.metrics.to_csv(out / METRICS_FILE)
        final = result.metrics.final
        accuracy_path = write_grid_csv(out / ACCURACY_FILE, final.accuracy, comment=f"lambda: {weights.describe()}")

        display_grid("Test accuracy (rows d, columns w)", final.accuracy, highlight=(model.L, model.C))
        display_success(f"Trained {result.steps} steps, final loss {result.final_loss:.4f}")
        self.console.print(f"Model: {model_path}\nMetrics: {metrics_path}\nConfig: {config_path}")
        return TrainArtifacts(model_path, metrics_path, accuracy_path, config_path, result)
