"""
Loss-weight matrices λ(l, c) over the head grid
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from ..core.config import LambdaConfig
from ..core.errors import ConfigError, DataError
from ..utils.tables import read_grid_csv


@dataclass
class LossWeightMatrix:
    """Non-negative L x C head multipliers plus a record of how they were built"""
    values: np.ndarray
    kind: str = "flat"
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ConfigError(f"Loss weights must form an L x C matrix, got shape {list(values.shape)}")
        if not np.isfinite(values).all() or (values < 0).any():
            raise ConfigError("Loss weights must be finite and non-negative")
        if not (values > 0).any():
            raise ConfigError("At least one loss weight must be positive")
        self.values = values

    @property
    def shape(self):
        return self.values.shape

    def describe(self) -> str:
        """One-line form, e.g. 'descend γ=1.2'"""
        if self.kind in ("descend", "ascend"):
            return f"{self.kind} γ={self.params['gamma']:g}"
        if self.kind == "custom":
            return f"custom table={self.params.get('table', '<array>')}"
        if self.kind == "single_pick":
            p = self.params
            return f"single_pick l={p['l']} c={p['c']} k={p['k']:g} base={p['base']:g}"
        return self.kind

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'params': dict(self.params), 'values': self.values.tolist()}


def flat(L: int, C: int) -> LossWeightMatrix:
    return LossWeightMatrix(np.ones((L, C)), "flat")


def _exponent_grid(L: int, C: int) -> np.ndarray:
    l, c = np.meshgrid(np.arange(1, L + 1), np.arange(1, C + 1), indexing="ij")
    return (l + c).astype(np.float64)


def _check_gamma(gamma: float) -> None:
    if not gamma > 1:
        raise ConfigError(f"γ must be larger than one, got {gamma}")


def descend(L: int, C: int, gamma: float = 1.2) -> LossWeightMatrix:
    """λ(l, c) = γ^-(l+c): emphasis on the cheap heads"""
    _check_gamma(gamma)
    return LossWeightMatrix(np.power(float(gamma), -_exponent_grid(L, C)), "descend", {'gamma': float(gamma)})


def ascend(L: int, C: int, gamma: float = 1.2) -> LossWeightMatrix:
    """λ(l, c) = γ^(l+c): emphasis on the large heads"""
    _check_gamma(gamma)
    return LossWeightMatrix(np.power(float(gamma), _exponent_grid(L, C)), "ascend", {'gamma': float(gamma)})


def custom(table: Union[np.ndarray, str, Path], L: int, C: int) -> LossWeightMatrix:
    """User table, given as an array or an L-row x C-column CSV file"""
    if isinstance(table, (str, Path)):
        try:
            values = read_grid_csv(table, (L, C), what="lambda table")
        except DataError as e:
            raise ConfigError(str(e))
        return LossWeightMatrix(values, "custom", {'table': str(table)})
    values = np.asarray(table, dtype=np.float64)
    if values.shape != (L, C):
        raise ConfigError(f"lambda table: dimension mismatch, expected {L}x{C}, got {list(values.shape)}")
    return LossWeightMatrix(values, "custom")


def single_pick(L: int, C: int, l: int, c: int, k: float = 100.0, base: float = 1.0) -> LossWeightMatrix:
    """``base`` everywhere and ``k`` at head (l, c); base=0 gives the one-hot matrix"""
    if not (1 <= l <= L and 1 <= c <= C):
        raise ConfigError(f"Picked head ({l}, {c}) outside the {L} x {C} grid")
    if k <= 0 or base < 0:
        raise ConfigError("single_pick needs k > 0 and base >= 0")
    values = np.full((L, C), float(base))
    values[l - 1, c - 1] = float(k)
    return LossWeightMatrix(values, "single_pick", {'l': int(l), 'c': int(c), 'k': float(k), 'base': float(base)})


def make_weights(kind: str, L: int, C: int, gamma: float = 1.2, table: Optional[Union[np.ndarray, str]] = None,
                 pick: Optional[tuple] = None, base: float = 1.0) -> LossWeightMatrix:
    if kind == "flat":
        return flat(L, C)
    if kind == "descend":
        return descend(L, C, gamma)
    if kind == "ascend":
        return ascend(L, C, gamma)
    if kind == "custom":
        if table is None:
            raise ConfigError("custom lambda needs a table")
        return custom(table, L, C)
    if kind == "single_pick":
        if pick is None or len(pick) != 3:
            raise ConfigError("single_pick lambda needs (l, c, k)")
        l, c, k = pick
        return single_pick(L, C, int(l), int(c), float(k), base)
    raise ConfigError(f"Unknown lambda kind '{kind}'")


def weights_from_config(config: LambdaConfig, L: int, C: int) -> LossWeightMatrix:
    config.validate()
    return make_weights(config.kind, L, C, gamma=config.gamma, table=config.table,
                        pick=tuple(config.pick) if config.pick else None, base=config.base)
