"""Accuracy metrics under three aggregation scopes.

Flattened metrics pool all person-days; between-person metrics compare
per-person means; within-person metrics score each person's own series
and average the per-person values.  The between-person Pearson r is
computed over the vector of person means (the per-person form is
degenerate for correlation), which the report marks explicitly.
"""

import csv
import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import stdtr

from .errors import DegenerateTestError, ParameterError, UndefinedMetricError
from .validation import as_float_array, check_matching_lengths

MAE = "mae"
SMAPE = "smape"
PEARSON_R = "pearson_r"
METRIC_NAMES = (MAE, SMAPE, PEARSON_R)


class MetricScope(enum.Enum):
    FLATTENED = "flattened"
    BETWEEN_PERSON = "between_person"
    WITHIN_PERSON = "within_person"


def mae(y_true, y_pred):
    """Mean absolute error."""
    y, p = _paired(y_true, y_pred)
    return float(np.mean(np.abs(p - y)))


def _smape_terms(y, p, eps):
    denom = np.abs(y) + np.abs(p) + eps
    if np.any(denom == 0.0):
        raise UndefinedMetricError(
            "smape undefined: |y| + |y_pred| is zero and eps is 0"
        )
    return 2.0 * np.abs(p - y) / denom


def smape(y_true, y_pred, eps=0.0):
    """Symmetric mean absolute percentage error, bounded in [0, 2].

    ``eps`` guards the denominator; it defaults to 0, which is safe
    whenever the outcome scale is bounded away from zero.
    """
    y, p = _paired(y_true, y_pred)
    return float(np.mean(_smape_terms(y, p, eps)))


def pearson_r(y_true, y_pred):
    """Product-moment correlation, in [-1, 1]."""
    y, p = _paired(y_true, y_pred)
    if len(y) < 2:
        raise UndefinedMetricError("pearson_r needs at least 2 pairs")
    # exact-constancy check: the mean of identical floats can round away
    # from them, which would make the variance guard below miss
    if np.all(y == y[0]) or np.all(p == p[0]):
        raise UndefinedMetricError("pearson_r undefined on a constant series")
    dy = y - y.mean()
    dp = p - p.mean()
    sy = np.sqrt(np.sum(dy * dy))
    sp = np.sqrt(np.sum(dp * dp))
    if sy == 0.0 or sp == 0.0:
        raise UndefinedMetricError("pearson_r undefined on a constant series")
    r = float(np.sum(dy * dp) / (sy * sp))
    return min(1.0, max(-1.0, r))


def mae_standard_error(y_true, y_pred):
    """Standard error of the flattened MAE: sd of |errors| over sqrt(N)."""
    y, p = _paired(y_true, y_pred)
    if len(y) < 2:
        raise ParameterError("standard error needs at least 2 pairs")
    e = np.abs(p - y)
    return float(np.std(e, ddof=1) / np.sqrt(len(e)))


def paired_one_sided_t(test_errors, baseline_errors):
    """One-sided paired t-test that the model's errors are smaller.

    Returns (t_stat, p_value) on the per-instance error differences with
    N-1 degrees of freedom; small p means the model beats the baseline.
    All-zero differences are the exact null (t=0, p=0.5); a constant
    nonzero difference has no defined statistic.
    """
    a = as_float_array(test_errors, "test_errors", ndim=1)
    b = as_float_array(baseline_errors, "baseline_errors", ndim=1)
    check_matching_lengths(a, b, "test_errors", "baseline_errors")
    n = len(a)
    if n < 2:
        raise ParameterError("paired test needs at least 2 pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    mean = float(np.mean(d))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 0.5
        raise DegenerateTestError("zero-variance nonzero differences")
    t = mean / (sd / np.sqrt(n))
    p = float(stdtr(n - 1, t))
    return float(t), p


def _paired(y_true, y_pred):
    y = as_float_array(y_true, "y_true", ndim=1)
    p = as_float_array(y_pred, "y_pred", ndim=1)
    check_matching_lengths(y, p, "y_true", "y_pred")
    if len(y) == 0:
        raise UndefinedMetricError("metric undefined on empty input")
    return y, p


@dataclass(frozen=True)
class PredictionSet:
    """Aligned (person, day, y_true, y_pred) entries for one test set."""

    person_ids: tuple
    days: np.ndarray
    y_true: np.ndarray
    y_pred: np.ndarray

    def __post_init__(self):
        n = len(self.person_ids)
        if not (len(self.days) == len(self.y_true) == len(self.y_pred) == n):
            raise ParameterError("prediction set columns must share one length")
        keys = list(zip(self.person_ids, (int(d) for d in self.days)))
        if len(set(keys)) != n:
            raise ParameterError("duplicate (person, day) in prediction set")

    @classmethod
    def from_entries(cls, entries):
        pids, days, yt, yp = [], [], [], []
        for pid, day, t, p in entries:
            pids.append(pid)
            days.append(day)
            yt.append(t)
            yp.append(p)
        return cls(
            tuple(pids),
            np.asarray(days, dtype=np.int64),
            np.asarray(yt, dtype=np.float64),
            np.asarray(yp, dtype=np.float64),
        )

    @property
    def n_entries(self):
        return len(self.person_ids)

    def by_person(self):
        """(person, y_true, y_pred) groups in first-appearance order."""
        order, index = [], {}
        for pid in self.person_ids:
            if pid not in index:
                index[pid] = len(order)
                order.append(pid)
        groups = [([], []) for _ in order]
        for pid, t, p in zip(self.person_ids, self.y_true, self.y_pred):
            g = groups[index[pid]]
            g[0].append(t)
            g[1].append(p)
        return [
            (pid, np.asarray(ts), np.asarray(ps))
            for pid, (ts, ps) in zip(order, groups)
        ]

    def check_outcome_bounds(self, outcome_min, outcome_max):
        if np.any(self.y_true < outcome_min) or np.any(self.y_true > outcome_max):
            raise ParameterError("y_true outside declared outcome bounds")


def scoped(metric, scope, preds, eps=0.0):
    """Evaluate one metric under one scope.

    Returns ``(value, n_units, excluded)`` where ``n_units`` counts
    instances for the flattened scope and contributing persons otherwise.
    ``excluded`` is nonzero only for within-person correlation, where
    persons with under 2 entries or a constant series cannot contribute.
    """
    if metric not in METRIC_NAMES:
        raise ParameterError(f"unknown metric {metric!r}")
    if preds.n_entries == 0:
        raise UndefinedMetricError("empty prediction set")
    y, p = preds.y_true, preds.y_pred

    if scope is MetricScope.FLATTENED:
        if metric == MAE:
            return mae(y, p), preds.n_entries, 0
        if metric == SMAPE:
            return smape(y, p, eps), preds.n_entries, 0
        return pearson_r(y, p), preds.n_entries, 0

    groups = preds.by_person()

    if scope is MetricScope.BETWEEN_PERSON:
        mean_y = np.array([ts.mean() for _, ts, _ in groups])
        mean_p = np.array([ps.mean() for _, _, ps in groups])
        if metric == PEARSON_R:
            return pearson_r(mean_y, mean_p), len(groups), 0
        if metric == SMAPE:
            vals = _smape_terms(mean_y, mean_p, eps)
        else:
            vals = np.abs(mean_p - mean_y)
        return float(np.mean(vals)), len(groups), 0

    if scope is MetricScope.WITHIN_PERSON:
        if metric == PEARSON_R:
            vals, excluded = [], 0
            for _, ts, ps in groups:
                try:
                    vals.append(pearson_r(ts, ps))
                except UndefinedMetricError:
                    excluded += 1
            if not vals:
                raise UndefinedMetricError(
                    "within-person r: every person excluded"
                )
            return float(np.mean(vals)), len(vals), excluded
        if metric == MAE:
            vals = np.array([np.mean(np.abs(ps - ts)) for _, ts, ps in groups])
        else:
            vals = np.array(
                [np.mean(_smape_terms(ts, ps, eps)) for _, ts, ps in groups]
            )
        return float(np.mean(vals)), len(groups), 0

    raise ParameterError(f"unknown scope {scope!r}")


@dataclass(frozen=True)
class ReportCell:
    split: str
    scope: MetricScope
    metric: str
    value: float
    se: "float | None"
    n_units: int
    excluded: int


@dataclass(frozen=True)
class ScopedMetricReport:
    """All (scope, metric) cells for one evaluated split."""

    cells: tuple

    def cell(self, scope, metric):
        for c in self.cells:
            if c.scope is scope and c.metric == metric:
                return c
        raise KeyError((scope, metric))

    def value(self, scope, metric):
        return self.cell(scope, metric).value

    def rows(self):
        for c in self.cells:
            yield (
                c.split,
                c.scope.value,
                c.metric,
                repr(c.value),
                "" if c.se is None else repr(c.se),
                c.n_units,
                c.excluded,
            )

    def write_csv(self, path, append=False):
        mode = "a" if append else "w"
        with open(path, mode, newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            if not append:
                writer.writerow(
                    ["split", "scope", "metric", "value", "se", "n_units", "excluded"]
                )
            for row in self.rows():
                writer.writerow(row)


def _scope_se(metric, scope, preds, eps):
    """Dispersion-based standard error; None where not meaningful."""
    if metric == PEARSON_R:
        return None
    y, p = preds.y_true, preds.y_pred
    if scope is MetricScope.FLATTENED:
        terms = np.abs(p - y) if metric == MAE else _smape_terms(y, p, eps)
    else:
        groups = preds.by_person()
        if scope is MetricScope.BETWEEN_PERSON:
            mean_y = np.array([ts.mean() for _, ts, _ in groups])
            mean_p = np.array([ps.mean() for _, _, ps in groups])
            terms = (
                np.abs(mean_p - mean_y)
                if metric == MAE
                else _smape_terms(mean_y, mean_p, eps)
            )
        else:
            terms = np.array(
                [
                    float(np.mean(np.abs(ps - ts)))
                    if metric == MAE
                    else float(np.mean(_smape_terms(ts, ps, eps)))
                    for _, ts, ps in groups
                ]
            )
    if len(terms) < 2:
        return None
    return float(np.std(terms, ddof=1) / np.sqrt(len(terms)))


def scoped_report(preds, split="", metrics=METRIC_NAMES, eps=0.0):
    """Evaluate every requested metric under all three scopes."""
    cells = []
    for scope in MetricScope:
        for metric in metrics:
            try:
                value, n_units, excluded = scoped(metric, scope, preds, eps)
            except UndefinedMetricError:
                cells.append(
                    ReportCell(split, scope, metric, float("nan"), None, 0, 0)
                )
                continue
            se = _scope_se(metric, scope, preds, eps)
            cells.append(
                ReportCell(split, scope, metric, value, se, n_units, excluded)
            )
    return ScopedMetricReport(tuple(cells))
