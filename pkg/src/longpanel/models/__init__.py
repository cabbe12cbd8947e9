"""Model suite: mean baseline, closed-form ridge, causal-window transformer."""

from .baseline import MeanBaseline
from .ridge import RidgeRegressor
from .selection import DEFAULT_PENALTY_GRID, SelectionTrace, select_ridge
from .serialize import load_model, param_hash, save_model
from .transformer import CausalWindowTransformer

__all__ = [
    "MeanBaseline",
    "RidgeRegressor",
    "CausalWindowTransformer",
    "SelectionTrace",
    "select_ridge",
    "DEFAULT_PENALTY_GRID",
    "save_model",
    "load_model",
    "param_hash",
]
