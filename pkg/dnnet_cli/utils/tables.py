"""
CSV storage of L x C grids (accuracy, score, loss-weight and baseline tables)
"""

from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..core.errors import DataError


def grid_frame(grid: np.ndarray) -> pd.DataFrame:
    """Rows d=1..L, columns w1..wC"""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise DataError(f"Grid must be two-dimensional, got shape {list(grid.shape)}")
    frame = pd.DataFrame(grid, columns=[f"w{c + 1}" for c in range(grid.shape[1])])
    frame.insert(0, "d", np.arange(1, grid.shape[0] + 1))
    return frame


def write_grid_csv(path: Union[str, Path], grid: np.ndarray, comment: Optional[str] = None) -> Path:
    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        if comment:
            f.write(f"# {comment}\n")
        grid_frame(grid).to_csv(f, index=False)
    return path


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_grid_csv(path: Union[str, Path], shape: Optional[Sequence[int]] = None, what: str = "grid") -> np.ndarray:
    """
    Read a grid written by write_grid_csv or a bare numeric CSV of L rows x C columns.
    ``shape`` (L, C) turns a size difference into a dimension-mismatch error.
    """
    path = Path(path).expanduser()
    if not path.is_file():
        raise DataError(f"{what} file not found: {path}")
    try:
        frame = pd.read_csv(path, comment="#")
        if all(_is_number(str(c)) for c in frame.columns):
            frame = pd.read_csv(path, comment="#", header=None)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Cannot parse {what} file {path}: {e}")

    if len(frame.columns) and str(frame.columns[0]).strip() == "d":
        frame = frame.drop(columns=frame.columns[0])
    values = frame.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=np.float64)
    if values.size == 0 or np.isnan(values).any():
        raise DataError(f"{what} file {path} contains empty or non-numeric cells")
    if shape is not None and tuple(values.shape) != tuple(shape):
        raise DataError(
            f"{what} file {path}: dimension mismatch, expected {shape[0]}x{shape[1]}, "
            f"got {values.shape[0]}x{values.shape[1]}"
        )
    return values


def grid_delta(grid: np.ndarray, baseline: np.ndarray) -> np.ndarray:
    """Cell-wise grid - baseline"""
    if grid.shape != baseline.shape:
        raise DataError(f"dimension mismatch: grid is {grid.shape[0]}x{grid.shape[1]}, "
                        f"baseline is {baseline.shape[0]}x{baseline.shape[1]}")
    return grid - baseline
