"""Small input-validation helpers used by the estimators."""

import numpy as np

from .errors import ParameterError


def as_float_array(x, name="array", ndim=None):
    """Coerce to a float64 ndarray, optionally enforcing dimensionality."""
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ParameterError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def check_finite(arr, name="array"):
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return arr


def check_matching_lengths(a, b, name_a="first", name_b="second"):
    if len(a) != len(b):
        raise ParameterError(
            f"{name_a} and {name_b} must have equal length, got {len(a)} and {len(b)}"
        )


def check_fraction(value, name, inclusive_high=False):
    high_ok = value <= 1.0 if inclusive_high else value < 1.0
    if not (0.0 < value and high_ok):
        bound = "(0, 1]" if inclusive_high else "(0, 1)"
        raise ParameterError(f"{name} must lie in {bound}, got {value}")
    return float(value)


def check_positive_int(value, name):
    if int(value) != value or value < 1:
        raise ParameterError(f"{name} must be a positive integer, got {value}")
    return int(value)
