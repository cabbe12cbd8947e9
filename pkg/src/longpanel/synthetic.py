"""Synthetic person-day cohorts with controllable variance structure.

Outcomes decompose into a stable person intercept, a mean-reverting
daily state, and observation noise; features are a fixed linear read-out
of the two latent parts plus noise.  Because the intercept/state split
is returned alongside the panel, tests can hold the generator to exact
distributional claims (ICC levels, autocorrelation, recoverability).
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .panel import Panel, PanelSchema, PersonSeries
from .metrics import PredictionSet

MISSING_RANDOM = "random"
MISSING_BLOCKS = "blocks"


@dataclass(frozen=True)
class CohortSpec:
    """Generative recipe for one synthetic cohort.

    ``between_sd`` scales stable person offsets, ``innovation_sd`` and
    ``ar_coef`` drive the within-person AR(1) state, ``noise_sd`` is
    day-level observation noise.  Features load on the two latent parts
    through a once-per-seed random matrix with unit-norm rows scaled by
    ``loading_scale``, so feature signal-to-noise is set entirely by
    ``feature_noise_sd``.
    """

    n_people: int
    study_length: int
    feature_dim: int
    outcome_mean: float = 3.0
    between_sd: float = 0.8
    ar_coef: float = 0.5
    innovation_sd: float = 0.2
    noise_sd: float = 0.2
    loading_scale: float = 1.0
    feature_noise_sd: float = 0.1
    feature_missing_rate: float = 0.0
    outcome_missing_rate: float = 0.0
    missingness: str = MISSING_RANDOM
    mean_block_length: float = 5.0
    outcome_bounds: tuple = (1.0, 5.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_people < 1 or self.study_length < 1 or self.feature_dim < 1:
            raise ParameterError("cohort dimensions must be positive")
        for name in ("between_sd", "innovation_sd", "noise_sd", "feature_noise_sd"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if not 0.0 <= self.ar_coef < 1.0:
            raise ParameterError("ar_coef must lie in [0, 1)")
        for name in ("feature_missing_rate", "outcome_missing_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ParameterError(f"{name} must lie in [0, 1)")
        if self.missingness not in (MISSING_RANDOM, MISSING_BLOCKS):
            raise ParameterError(f"unknown missingness mode {self.missingness!r}")
        if self.mean_block_length < 1.0:
            raise ParameterError("mean_block_length must be >= 1")
        lo, hi = self.outcome_bounds
        if not lo < hi:
            raise ParameterError("outcome_bounds must be an increasing pair")

    def schema(self):
        lo, hi = self.outcome_bounds
        return PanelSchema(
            study_length=self.study_length,
            feature_dim=self.feature_dim,
            outcome_min=lo,
            outcome_max=hi,
        )


@dataclass(frozen=True)
class GroundTruth:
    """Latent decomposition behind a generated panel."""

    person_ids: tuple
    outcome_mean: float
    intercepts: np.ndarray
    states: np.ndarray
    loading: np.ndarray = field(repr=False)

    def __post_init__(self):
        for arr in (self.intercepts, self.states, self.loading):
            arr.flags.writeable = False

    def intercept_of(self, person_id):
        return float(self.intercepts[self.person_ids.index(person_id)])

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["person_id", "day", "b", "s"])
            for i, pid in enumerate(self.person_ids):
                b = repr(float(self.intercepts[i]))
                for day in range(self.states.shape[1]):
                    writer.writerow(
                        [pid, day, b, repr(float(self.states[i, day]))]
                    )

    @classmethod
    def from_csv(cls, path, outcome_mean):
        rows = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            for pid, day, b, s in reader:
                rows.setdefault(pid, {})[int(day)] = (float(b), float(s))
        person_ids = tuple(sorted(rows))
        t = max(max(d) for d in rows.values()) + 1
        intercepts = np.array([rows[p][0][0] for p in person_ids])
        states = np.array(
            [[rows[p][day][1] for day in range(t)] for p in person_ids]
        )
        return cls(
            person_ids=person_ids,
            outcome_mean=outcome_mean,
            intercepts=intercepts,
            states=states,
            loading=np.zeros((0, 2)),
        )


def _person_ids(n):
    width = max(3, len(str(n - 1)))
    return tuple(f"p{i:0{width}d}" for i in range(n))


def _missing_mask(rng, shape, rate, mode, mean_block_length):
    """True where a cell is missing."""
    if rate == 0.0:
        return np.zeros(shape, dtype=bool)
    if mode == MISSING_RANDOM:
        return rng.random(shape) < rate
    # two-state Markov chain with stationary missing rate and the given
    # mean run length: P(stay missing) = 1 - 1/L, P(become missing)
    # solves the stationarity equation for the observed state
    n, t = shape
    stay = 1.0 - 1.0 / mean_block_length
    enter = min(1.0, rate / (mean_block_length * (1.0 - rate)))
    mask = np.zeros(shape, dtype=bool)
    state = rng.random(n) < rate
    mask[:, 0] = state
    for day in range(1, t):
        u = rng.random(n)
        state = np.where(state, u < stay, u < enter)
        mask[:, day] = state
    return mask


def generate(spec):
    """Draw one cohort; returns the observable panel and its ground truth.

    Deterministic: identical spec (seed included) gives a bit-identical
    panel.  All randomness flows through one generator in a fixed order:
    loading matrix, intercepts, states, outcome noise, feature noise,
    then missingness masks.
    """
    rng = np.random.default_rng(spec.seed)
    n, t, d = spec.n_people, spec.study_length, spec.feature_dim

    loading = rng.normal(size=(d, 2))
    norms = np.linalg.norm(loading, axis=1, keepdims=True)
    loading = spec.loading_scale * loading / norms

    intercepts = rng.normal(0.0, spec.between_sd, size=n)
    states = np.empty((n, t))
    stationary_sd = (
        spec.innovation_sd / np.sqrt(1.0 - spec.ar_coef**2)
        if spec.innovation_sd > 0
        else 0.0
    )
    states[:, 0] = rng.normal(0.0, stationary_sd, size=n)
    for day in range(1, t):
        states[:, day] = spec.ar_coef * states[:, day - 1] + rng.normal(
            0.0, spec.innovation_sd, size=n
        )

    lo, hi = spec.outcome_bounds
    noise = rng.normal(0.0, spec.noise_sd, size=(n, t))
    outcomes = np.clip(
        spec.outcome_mean + intercepts[:, None] + states + noise, lo, hi
    )

    latent = np.stack(
        [np.broadcast_to(intercepts[:, None], (n, t)), states], axis=-1
    )
    features = latent @ loading.T + rng.normal(
        0.0, spec.feature_noise_sd, size=(n, t, d)
    )

    feat_missing = _missing_mask(
        rng, (n, t), spec.feature_missing_rate, spec.missingness,
        spec.mean_block_length,
    )
    out_missing = _missing_mask(
        rng, (n, t), spec.outcome_missing_rate, spec.missingness,
        spec.mean_block_length,
    )

    ids = _person_ids(n)
    series = {}
    for i, pid in enumerate(ids):
        f = features[i].copy()
        f[feat_missing[i]] = np.nan
        y = outcomes[i].copy()
        y[out_missing[i]] = np.nan
        imp = np.zeros(t, dtype=bool)
        for arr in (f, y, imp):
            arr.flags.writeable = False
        series[pid] = PersonSeries(features=f, outcomes=y, imputed=imp)
    panel = Panel(schema=spec.schema(), series=series)
    truth = GroundTruth(
        person_ids=ids,
        outcome_mean=spec.outcome_mean,
        intercepts=intercepts,
        states=states,
        loading=loading,
    )
    return panel, truth


def oracle_between_only_predictor(panel, truth):
    """Predictions from person baselines alone: mean + intercept, no dynamics.

    The canonical generator of scope dissociation: between-person
    correlation is near-perfect when noise is small, while within-person
    correlation is undefined for every person (the predictor never moves
    within a person, so each per-person series is constant and excluded).
    """
    entries = []
    for pid in panel.person_ids:
        yhat = truth.outcome_mean + truth.intercept_of(pid)
        s = panel.series[pid]
        for day in np.nonzero(s.has_outcome())[0]:
            entries.append((pid, int(day), float(s.outcomes[day]), yhat))
    return PredictionSet.from_entries(entries)
