"""Penalty selection on a regime-matched development set."""

from dataclasses import dataclass

import numpy as np

from ..errors import DegeneratePlanError
from ..metrics import mae
from ..validation import as_float_array
from .ridge import RidgeRegressor

# {10^i : i in [-2, 5]}, 8 values from light to heavy shrinkage.
DEFAULT_PENALTY_GRID = tuple(float(10.0**i) for i in range(-2, 6))


@dataclass(frozen=True)
class SelectionTrace:
    """Record of a hyperparameter sweep: every candidate, its dev score,
    the winner, and the regime the dev set was carved under."""

    grid: tuple
    chosen: float
    dev_regime: object = None

    def __post_init__(self):
        best = min(score for _, score in self.grid)
        chosen_score = dict(self.grid)[self.chosen]
        if not (chosen_score <= best + 1e-12):
            raise ValueError("chosen hyperparameter does not minimize dev score")


def select_ridge(
    train_X,
    train_y,
    dev_X,
    dev_y,
    grid=DEFAULT_PENALTY_GRID,
    encoding=None,
    history=None,
    dev_regime=None,
):
    """Sweep the penalty grid, score flattened dev MAE, refit on train+dev.

    Ties break toward the larger penalty (prefer shrinkage when the dev
    set cannot distinguish candidates).
    """
    train_X = as_float_array(train_X, "train_X", ndim=2)
    train_y = as_float_array(train_y, "train_y", ndim=1)
    dev_X = as_float_array(dev_X, "dev_X", ndim=2)
    dev_y = as_float_array(dev_y, "dev_y", ndim=1)
    if len(dev_y) == 0:
        raise DegeneratePlanError("dev set is empty; cannot select a penalty")
    if len(train_y) == 0:
        raise DegeneratePlanError("train set is empty; cannot select a penalty")
    entries = []
    best_penalty = None
    best_score = np.inf
    for penalty in grid:
        model = RidgeRegressor(
            penalty=penalty, encoding=encoding, history=history
        ).fit(train_X, train_y)
        score = mae(dev_y, model.predict(dev_X))
        entries.append((float(penalty), float(score)))
        if (
            best_penalty is None
            or score < best_score
            or (score == best_score and float(penalty) > best_penalty)
        ):
            best_score = score
            best_penalty = float(penalty)
    trace = SelectionTrace(
        grid=tuple(entries), chosen=best_penalty, dev_regime=dev_regime
    )
    full_X = np.vstack([train_X, dev_X])
    full_y = np.concatenate([train_y, dev_y])
    final = RidgeRegressor(
        penalty=best_penalty, encoding=encoding, history=history
    ).fit(full_X, full_y)
    return final, trace
