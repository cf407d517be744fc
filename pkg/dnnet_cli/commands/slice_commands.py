"""
Slice extraction, cost tables, budgeted selection and frontiers
"""

from pathlib import Path
from typing import Optional, Sequence, Union

import pandas as pd
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from ..core.config import ArchDescriptor
from ..core.errors import InfeasibleBudgetError
from ..slicing.cost import CostTable, cost, cost_table
from ..slicing.selector import FAMILIES, Budget, pareto_frontier, select_slice
from ..slicing.serialize import inspect, load_nested, save
from ..slicing.sliced import SliceId, slice_model
from ..utils.helpers import display_grid, display_success, format_count
from ..utils.logging import get_logger
from ..utils.tables import read_grid_csv

logger = get_logger(__name__)


class SliceCommands:
    """Everything that turns a trained model into deployable slices"""

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()

    def extract(self, model_path: Union[str, Path], d: int, w: int, out: Union[str, Path]) -> Path:
        model = load_nested(model_path)
        if not model.frozen:
            model.freeze()
        slice_id = SliceId(d, w)
        sliced = slice_model(model, slice_id)
        path = save(sliced, out)
        c = cost(model.plan, slice_id)
        self.console.print(Panel(
            f"parameters: {format_count(sliced.num_parameters())} of {format_count(model.num_parameters())}\n"
            f"MACs: {format_count(c.macs)}   peak activation: {format_count(c.peak_activation)}",
            title=f"Slice {slice_id}",
            border_style="blue",
        ))
        display_success(f"Sliced model written to {path}")
        return path

    def costs(self, source: Union[str, Path, ArchDescriptor], out: Union[str, Path],
              input_hw: Optional[Sequence[int]] = None) -> CostTable:
        """Cost table from a model container, a preset name or a descriptor YAML"""
        descriptor, group_spec = self._descriptor(source)
        table = cost_table(descriptor, input_hw, group_spec)
        path = table.to_csv(out)
        display_grid("MACs per sample", table.macs, fmt="{:,.0f}")
        display_grid("Peak activation (scalars)", table.peak_activation, fmt="{:,.0f}")
        display_success(f"Cost table written to {path}")
        return table

    def _descriptor(self, source):
        if isinstance(source, ArchDescriptor):
            return source, None
        path = Path(str(source)).expanduser()
        if path.is_file() and path.suffix not in (".yaml", ".yml"):
            info = inspect(path)
            return info.descriptor, info.group_spec
        return ArchDescriptor.resolve(source), None

    def select(self, cost_csv: Union[str, Path], score_csv: Union[str, Path], budget: Budget) -> SliceId:
        costs = CostTable.from_csv(cost_csv)
        scores = read_grid_csv(score_csv, costs.shape, what="score table")
        choice = select_slice(costs, scores, budget)
        if choice is None:
            raise InfeasibleBudgetError(f"No slice satisfies the budget {budget.to_dict()}")
        c = costs.at(choice.d, choice.w)
        table = Table(title=f"Selected slice {choice}", show_header=True, header_style="bold magenta")
        for column in ("d", "w", "score", "macs", "params", "peak_activation"):
            table.add_column(column, justify="right")
        table.add_row(str(choice.d), str(choice.w), f"{scores[choice.d - 1, choice.w - 1]:.4f}",
                      f"{c.macs:,}", f"{c.params:,}", f"{c.peak_activation:,}")
        self.console.print(table)
        logger.info("Selected %s under %s", choice, budget.to_dict())
        return choice

    def frontier(self, cost_csv: Union[str, Path], score_csv: Union[str, Path],
                 out: Optional[Union[str, Path]] = None) -> pd.DataFrame:
        costs = CostTable.from_csv(cost_csv)
        scores = read_grid_csv(score_csv, costs.shape, what="score table")
        frame = pd.concat([pareto_frontier(costs, scores, family) for family in FAMILIES], ignore_index=True)

        table = Table(title="Pareto frontier (MACs, peak activation, score)", show_header=True,
                      header_style="bold magenta")
        for column in ("family", "d", "w", "macs", "peak_activation", "score"):
            table.add_column(column, justify="right")
        for row in frame.itertuples(index=False):
            table.add_row(row.family, str(row.d), str(row.w), format_count(row.macs),
                          format_count(row.peak_activation), f"{row.score:.4f}")
        self.console.print(table)

        sizes = frame.groupby("family").size()
        self.console.print(", ".join(f"{family}: {int(sizes.get(family, 0))} points" for family in FAMILIES))
        if out is not None:
            path = Path(out).expanduser()
            path.parent.mkdir(parents=True, exist_ok=True)
            frame.to_csv(path, index=False)
            display_success(f"Frontier written to {path}")
        return frame
