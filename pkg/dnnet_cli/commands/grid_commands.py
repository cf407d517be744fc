"""
Accuracy grid of a stored model, with optional baseline delta and width curve
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
from rich.console import Console
from rich.table import Table

from ..core.config import DataConfig
from ..data import load_datasets
from ..slicing.serialize import load_nested
from ..training.evaluate import evaluate, width_curve
from ..utils.helpers import display_grid, display_success
from ..utils.logging import get_logger
from ..utils.tables import grid_delta, read_grid_csv, write_grid_csv

logger = get_logger(__name__)


@dataclass
class GridArtifacts:
    accuracy: np.ndarray
    files: Dict[str, Path] = field(default_factory=dict)
    delta: Optional[np.ndarray] = None


class GridCommands:
    """Evaluates every head of a model on the test split"""

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()

    def run(
        self,
        model_path: Union[str, Path],
        data: DataConfig,
        out: Union[str, Path],
        baseline: Optional[Union[str, Path]] = None,
        curve: bool = False,
        workers: int = 1,
    ) -> GridArtifacts:
        model = load_nested(model_path)
        out = Path(out).expanduser()
        # fail on a bad baseline before spending time on evaluation
        base = read_grid_csv(baseline, (model.L, model.C), what="baseline grid") if baseline else None

        _, test_set = load_datasets(data, model.descriptor)
        logger.info("Evaluating %dx%d heads on %d test images", model.L, model.C, test_set.count)
        result = evaluate(model, test_set, workers=workers)
        artifacts = GridArtifacts(result.accuracy)
        artifacts.files['accuracy'] = write_grid_csv(out / "accuracy_grid.csv", result.accuracy)
        display_grid("Test accuracy (rows d, columns w)", result.accuracy, highlight=(model.L, model.C))

        if base is not None:
            artifacts.delta = grid_delta(result.accuracy, base)
            artifacts.files['delta'] = write_grid_csv(out / "accuracy_delta.csv", artifacts.delta,
                                                      comment=f"baseline: {baseline}")
            display_grid("Difference from baseline", artifacts.delta, fmt="{:+.3f}", signed=True)

        if curve:
            frame = width_curve(model, test_set, accuracy=result.accuracy)
            path = out / "width_curve.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            frame.to_csv(path, index=False)
            artifacts.files['curve'] = path
            self._show_curve(frame)

        for name, path in artifacts.files.items():
            display_success(f"{name}: {path}")
        return artifacts

    def _show_curve(self, frame) -> None:
        table = Table(title="Full-depth accuracy by channel groups", show_header=True, header_style="bold magenta")
        table.add_column("w", style="cyan", justify="right")
        table.add_column("channels", justify="right")
        table.add_column("accuracy", style="green", justify="right")
        for row in frame.itertuples(index=False):
            table.add_row(str(row.w), str(row.channels), f"{row.accuracy:.3f}")
        self.console.print(table)
