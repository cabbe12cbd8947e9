"""Closed-form ridge regression with an unpenalized intercept.

The intercept is handled by centering the targets, never the features,
so that as the penalty grows the weights shrink to zero and predictions
collapse onto the train-target mean; penalizing the intercept would make
that mean-baseline limit unreachable.
"""

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin

from ..errors import ParameterError
from ..validation import as_float_array, check_finite, check_matching_lengths

_RESIDUAL_RTOL = 1e-8


class RidgeRegressor(BaseEstimator, RegressorMixin):
    """Solves (X'X + penalty*I) w = X'(y - mean(y)) by an SPD factorization.

    ``encoding`` and ``history`` are bookkeeping for serialized models
    (which history encoding and window the design matrix came from); they
    do not affect the solve.
    """

    def __init__(self, penalty=1.0, encoding=None, history=None):
        self.penalty = penalty
        self.encoding = encoding
        self.history = history

    def fit(self, X, y):
        if not np.isfinite(self.penalty) or self.penalty <= 0:
            raise ParameterError(f"penalty must be positive, got {self.penalty}")
        X = as_float_array(X, "X", ndim=2)
        y = as_float_array(y, "y", ndim=1)
        check_matching_lengths(X, y, "X", "y")
        check_finite(X, "X")
        check_finite(y, "y")
        if len(y) == 0:
            raise ParameterError("cannot fit ridge on an empty dataset")
        n, p = X.shape
        ybar = float(np.mean(y))
        yc = y - ybar
        gram = X.T @ X + self.penalty * np.eye(p)
        rhs = X.T @ yc
        cho = scipy.linalg.cho_factor(gram, lower=True)
        w = scipy.linalg.cho_solve(cho, rhs)
        residual = gram @ w - rhs
        scale = np.linalg.norm(rhs)
        if np.linalg.norm(residual) > _RESIDUAL_RTOL * max(scale, 1.0):
            raise ParameterError(
                "ridge solve failed the residual check; "
                f"relative residual {np.linalg.norm(residual) / max(scale, 1.0):.3e}"
            )
        self.coef_ = w
        self.intercept_ = ybar
        self.coef_.flags.writeable = False
        return self

    def predict(self, X):
        if not hasattr(self, "coef_"):
            raise ParameterError("RidgeRegressor is not fitted")
        X = as_float_array(X, "X", ndim=2)
        if X.shape[1] != self.coef_.shape[0]:
            raise ParameterError(
                f"expected {self.coef_.shape[0]} features, got {X.shape[1]}"
            )
        return X @ self.coef_ + self.intercept_
