"""
Budgeted slice selection and cost/score frontiers
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from ..core.errors import ConfigError, DataError
from .cost import CostTable, SliceCost
from .sliced import SliceId

FAMILIES = ("all", "width", "depth")


@dataclass(frozen=True)
class Budget:
    """Upper bounds on slice cost; None means unbounded"""
    max_macs: Optional[int] = None
    max_params: Optional[int] = None
    max_peak_activation: Optional[int] = None

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value is not None and value < 0:
                raise ConfigError(f"Budget {name} must be non-negative, got {value}")

    @property
    def unbounded(self) -> bool:
        return all(v is None for v in asdict(self).values())

    def feasible(self, cost: SliceCost) -> bool:
        return (
            (self.max_macs is None or cost.macs <= self.max_macs)
            and (self.max_params is None or cost.params <= self.max_params)
            and (self.max_peak_activation is None or cost.peak_activation <= self.max_peak_activation)
        )

    def feasible_grid(self, costs: CostTable) -> np.ndarray:
        """Boolean L x C grid of slices within every bound"""
        ok = np.ones(costs.shape, dtype=bool)
        for limit, values in ((self.max_macs, costs.macs), (self.max_params, costs.params),
                              (self.max_peak_activation, costs.peak_activation)):
            if limit is not None:
                ok &= values <= limit
        return ok

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _check_scores(costs: CostTable, scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != tuple(costs.shape):
        raise DataError(f"Score table is {scores.shape[0]}x{scores.shape[1]}, "
                        f"cost table is {costs.shape[0]}x{costs.shape[1]}")
    if not np.isfinite(scores).all():
        raise DataError("Score table contains non-finite cells")
    return scores


def select_slice(costs: CostTable, scores: np.ndarray, budget: Budget) -> Optional[SliceId]:
    """
    Highest-scoring slice inside the budget, or None if nothing fits.

    Ties go to fewer MACs, then fewer parameters, then the smaller (d, w).
    """
    scores = _check_scores(costs, scores)
    d_idx, w_idx = np.nonzero(budget.feasible_grid(costs))
    if d_idx.size == 0:
        return None
    # lexsort uses the last key as the primary one
    order = np.lexsort((
        w_idx,
        d_idx,
        costs.params[d_idx, w_idx],
        costs.macs[d_idx, w_idx],
        -scores[d_idx, w_idx],
    ))
    best = order[0]
    return SliceId(int(d_idx[best]) + 1, int(w_idx[best]) + 1)


def family_cells(shape, family: str) -> List[tuple]:
    """1-based (d, w) cells of a slice family: the full grid, width-only or depth-only"""
    L, C = shape
    if family == "all":
        return [(d, w) for d in range(1, L + 1) for w in range(1, C + 1)]
    if family == "width":
        return [(L, w) for w in range(1, C + 1)]
    if family == "depth":
        return [(d, C) for d in range(1, L + 1)]
    raise ConfigError(f"Unknown slice family '{family}' (expected one of {FAMILIES})")


def pareto_frontier(costs: CostTable, scores: np.ndarray, family: str = "all") -> pd.DataFrame:
    """
    Slices of ``family`` not dominated in (macs, peak_activation, -score),
    sorted by MACs. Width-only slices keep every layer group, depth-only slices
    keep every channel group.
    """
    scores = _check_scores(costs, scores)
    rows = []
    for d, w in family_cells(costs.shape, family):
        c = costs.at(d, w)
        rows.append({'d': d, 'w': w, 'macs': c.macs, 'peak_activation': c.peak_activation,
                     'params': c.params, 'score': float(scores[d - 1, w - 1])})
    frame = pd.DataFrame(rows)

    points = frame[["macs", "peak_activation"]].to_numpy(dtype=np.float64)
    points = np.column_stack([points, -frame["score"].to_numpy()])
    keep = []
    for i in range(len(points)):
        no_worse = (points <= points[i]).all(axis=1)
        better = (points < points[i]).any(axis=1)
        keep.append(not (no_worse & better).any())
    frontier = frame[np.array(keep, dtype=bool)]
    frontier = frontier.sort_values(["macs", "peak_activation", "d", "w"]).reset_index(drop=True)
    frontier.insert(0, "family", family)
    return frontier
