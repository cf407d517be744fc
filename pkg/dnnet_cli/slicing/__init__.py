"""
Slice extraction, cost model, budgeted selection and model containers
"""

from .cost import CostTable, SliceCost, cost, cost_table
from .selector import Budget, pareto_frontier, select_slice
from .serialize import load, load_nested, save
from .sliced import SlicedModel, SliceId, slice_model

__all__ = [
    "Budget",
    "CostTable",
    "SliceCost",
    "SliceId",
    "SlicedModel",
    "cost",
    "cost_table",
    "load",
    "load_nested",
    "pareto_frontier",
    "save",
    "select_slice",
    "slice_model",
]
