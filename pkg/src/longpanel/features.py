"""Dimensionality reduction and history-window encodings.

Per-day representations are reduced with a deterministic PCA fitted on
training rows only, then history windows are flattened (stacked), pooled
(averaged), or passed through as ordered sequences depending on the
downstream model family.
"""

import csv
import enum
import json

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import LeakageError, ParameterError, RankError
from .splits import Assignment
from .validation import as_float_array, check_finite, check_positive_int

# Hidden-size sweep for experiments: PCA target dims spanning the
# compact-to-full range of day representations.
HIDDEN_SIZE_GRID = (64, 128, 256, 512, 1024)


class HistoryEncoding(enum.Enum):
    STACKED = "stacked"
    POOLED = "pooled"
    SEQUENCE = "sequence"

    @classmethod
    def parse(cls, name):
        for enc in cls:
            if enc.value == name or enc.name.lower() == str(name).lower():
                return enc
        raise ParameterError(f"unknown history encoding {name!r}")


class PcaReducer(BaseEstimator, TransformerMixin):
    """Centered PCA via covariance eigendecomposition.

    Deterministic by construction: dense symmetric eigensolve, components
    ordered by descending eigenvalue, and a fixed sign convention (each
    component's largest-magnitude coordinate is positive).  Fitting
    refuses rows labeled dev or test so reduced features can never leak
    evaluation data into the basis.
    """

    def __init__(self, n_components):
        self.n_components = n_components

    def fit(self, X, y=None, assignments=None):
        check_positive_int(self.n_components, "n_components")
        X = as_float_array(X, "X", ndim=2)
        check_finite(X, "X")
        if assignments is not None:
            labels = [
                a if isinstance(a, Assignment) else Assignment(a)
                for a in assignments
            ]
            if len(labels) != len(X):
                raise ParameterError("assignments must align with rows of X")
            bad = {a.value for a in labels if a is not Assignment.TRAIN}
            if bad:
                raise LeakageError(
                    f"PCA fit received non-train rows: {sorted(bad)}"
                )
        n, d = X.shape
        if n < 2:
            raise ParameterError("PCA needs at least 2 rows")
        if self.n_components > d:
            raise ParameterError(
                f"n_components={self.n_components} exceeds feature dim {d}"
            )
        mean = X.mean(axis=0)
        centered = X - mean
        cov = centered.T @ centered / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1]
        eigvals = eigvals[order]
        eigvecs = eigvecs[:, order]
        # rank gate: eigenvalues at noise level do not count as directions
        top = max(eigvals[0], 0.0)
        tol = top * max(n, d) * np.finfo(np.float64).eps
        rank = int(np.sum(eigvals > tol))
        if self.n_components > rank:
            raise RankError(
                f"n_components={self.n_components} exceeds numerical rank {rank}"
            )
        components = eigvecs[:, : self.n_components].T.copy()
        for row in components:
            j = int(np.argmax(np.abs(row)))
            if row[j] < 0:
                row *= -1
        gram = components @ components.T
        np.testing.assert_allclose(
            gram, np.eye(self.n_components), atol=1e-10
        )
        self.mean_ = mean
        self.components_ = components
        self.explained_variance_ = np.maximum(eigvals[: self.n_components], 0.0)
        self.mean_.flags.writeable = False
        self.components_.flags.writeable = False
        self.explained_variance_.flags.writeable = False
        return self

    def transform(self, X):
        self._check_fitted()
        X = as_float_array(X, "X")
        single = X.ndim == 1
        rows = X[None, :] if single else X
        if rows.ndim != 2 or rows.shape[1] != self.mean_.shape[0]:
            raise ParameterError(
                f"expected vectors of length {self.mean_.shape[0]}, "
                f"got shape {X.shape}"
            )
        out = (rows - self.mean_) @ self.components_.T
        return out[0] if single else out

    def transform_windows(self, windows):
        """Reduce (N, h, D) day-feature windows to (N, h, d)."""
        self._check_fitted()
        windows = as_float_array(windows, "windows", ndim=3)
        n, h, d = windows.shape
        flat = self.transform(windows.reshape(n * h, d))
        return flat.reshape(n, h, self.n_components)

    def inverse_transform(self, Z):
        self._check_fitted()
        Z = as_float_array(Z, "Z")
        return Z @ self.components_ + self.mean_

    def _check_fitted(self):
        if not hasattr(self, "components_"):
            raise ParameterError("PcaReducer is not fitted")

    # -- serialization ---------------------------------------------------

    def to_csv(self, path):
        self._check_fitted()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(
                "# "
                + json.dumps(
                    {
                        "feature_dim": int(self.mean_.shape[0]),
                        "n_components": int(self.n_components),
                    },
                    sort_keys=True,
                )
                + "\n"
            )
            writer = csv.writer(fh)
            writer.writerow(["mean", ""] + [repr(float(v)) for v in self.mean_])
            for i, row in enumerate(self.components_):
                writer.writerow(["component", i] + [repr(float(v)) for v in row])
            writer.writerow(
                ["variance", ""]
                + [repr(float(v)) for v in self.explained_variance_]
            )

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            lines = fh.readlines()
        if not lines or not lines[0].startswith("#"):
            raise ParameterError("missing PCA header line")
        header = json.loads(lines[0][1:].strip())
        mean = None
        variance = None
        comps = {}
        for row in csv.reader(lines[1:]):
            if not row:
                continue
            kind = row[0]
            values = np.array([float(v) for v in row[2:]], dtype=np.float64)
            if kind == "mean":
                mean = values
            elif kind == "component":
                comps[int(row[1])] = values
            elif kind == "variance":
                variance = values
            else:
                raise ParameterError(f"unknown PCA bundle row kind {kind!r}")
        k = header["n_components"]
        if mean is None or variance is None or sorted(comps) != list(range(k)):
            raise ParameterError("incomplete PCA bundle")
        reducer = cls(n_components=k)
        reducer.mean_ = mean
        reducer.components_ = np.stack([comps[i] for i in range(k)])
        reducer.explained_variance_ = variance
        for arr in (reducer.mean_, reducer.components_, reducer.explained_variance_):
            arr.flags.writeable = False
        return reducer


def encode_history(window, encoding):
    """Turn one (h, d) window into a model input.

    Stacked concatenates days oldest-first into a length h*d vector,
    pooled averages the days into a length-d vector, and sequence
    returns the ordered matrix unchanged.
    """
    window = as_float_array(window, "window", ndim=2)
    encoding = HistoryEncoding(encoding)
    if encoding is HistoryEncoding.STACKED:
        return window.reshape(-1)
    if encoding is HistoryEncoding.POOLED:
        return window.mean(axis=0)
    return window


def encode_windows(windows, encoding):
    """Batched ``encode_history`` over (N, h, d) windows."""
    windows = as_float_array(windows, "windows", ndim=3)
    encoding = HistoryEncoding(encoding)
    n, h, d = windows.shape
    if encoding is HistoryEncoding.STACKED:
        return windows.reshape(n, h * d)
    if encoding is HistoryEncoding.POOLED:
        return windows.mean(axis=1)
    return windows
