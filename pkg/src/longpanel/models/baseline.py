"""Train-mean baseline: the reference point every model is tested against."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ..errors import ParameterError
from ..validation import as_float_array, check_finite


class MeanBaseline(BaseEstimator, RegressorMixin):
    """Predicts the arithmetic mean of the training targets for any input."""

    def fit(self, X, y):
        y = as_float_array(y, "y", ndim=1)
        if len(y) == 0:
            raise ParameterError("cannot fit a mean baseline on empty targets")
        check_finite(y, "y")
        self.mean_ = float(np.mean(y))
        return self

    def predict(self, X):
        if not hasattr(self, "mean_"):
            raise ParameterError("MeanBaseline is not fitted")
        n = len(X)
        return np.full(n, self.mean_, dtype=np.float64)
