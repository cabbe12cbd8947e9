"""Person-indexed, day-ordered panel data model.

A panel holds, for every person, a dense day-indexed series of optional
feature vectors and optional outcomes over a fixed study window.  Missing
days are kept as explicit gaps (NaN rows) so history windows stay
calendar-aligned.  Panels are immutable: every operation returns a new
value and the backing arrays are marked read-only.
"""

import csv
import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicateKeyError, PanelFormatError, ParameterError
from .validation import check_fraction, check_positive_int


class CoverageWarning(UserWarning):
    """Raised (as a warning) when a coverage filter empties the panel."""


class TaskMode(enum.Enum):
    """Supervised pairing rule for instance construction."""

    NOWCAST = "nowcast"
    FORECAST_ONE_AHEAD = "forecast"

    @classmethod
    def parse(cls, name):
        for mode in cls:
            if mode.value == name or mode.name.lower() == str(name).lower():
                return mode
        raise ParameterError(f"unknown task mode {name!r}")


@dataclass(frozen=True)
class PanelSchema:
    """Declared shape and outcome bounds of a panel file."""

    study_length: int
    feature_dim: int
    outcome_min: float = 1.0
    outcome_max: float = 5.0

    def __post_init__(self):
        check_positive_int(self.study_length, "study_length")
        check_positive_int(self.feature_dim, "feature_dim")
        if not self.outcome_min < self.outcome_max:
            raise ParameterError("outcome_min must be below outcome_max")


@dataclass(frozen=True)
class Observation:
    """One (person, day) cell: optional features, optional outcome."""

    features: object  # (D,) float array or None
    outcome: object   # float or None
    imputed: bool = False


def _frozen(arr):
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PersonSeries:
    """Dense per-person series over the study window.

    ``features`` is (T, D) with all-NaN rows for missing days, ``outcomes``
    is (T,) with NaN for missing days, ``imputed`` flags days whose
    features were carried forward.
    """

    features: np.ndarray
    outcomes: np.ndarray
    imputed: np.ndarray

    def has_features(self):
        return ~np.isnan(self.features[:, 0])

    def has_outcome(self):
        return ~np.isnan(self.outcomes)

    def observed_days(self):
        """Days carrying any data, in increasing order."""
        return np.nonzero(self.has_features() | self.has_outcome())[0]


@dataclass(frozen=True)
class Panel:
    """Immutable person-indexed, day-ordered panel."""

    schema: PanelSchema
    series: dict = field(default_factory=dict)  # person_id -> PersonSeries

    @property
    def study_length(self):
        return self.schema.study_length

    @property
    def feature_dim(self):
        return self.schema.feature_dim

    @property
    def person_ids(self):
        return sorted(self.series)

    @property
    def n_people(self):
        return len(self.series)

    def observation(self, person_id, day):
        s = self.series[person_id]
        feats = s.features[day]
        out = s.outcomes[day]
        return Observation(
            features=None if np.isnan(feats[0]) else feats,
            outcome=None if np.isnan(out) else float(out),
            imputed=bool(s.imputed[day]),
        )

    def subset(self, person_ids):
        """Panel restricted to the given persons (order-insensitive)."""
        keep = set(person_ids)
        missing = keep - set(self.series)
        if missing:
            raise ParameterError(f"unknown person ids: {sorted(missing)}")
        return Panel(self.schema, {p: s for p, s in self.series.items() if p in keep})

    def outcome_triples(self):
        """Sorted (person, day, outcome) triples over observed outcomes."""
        triples = []
        for pid in self.person_ids:
            s = self.series[pid]
            for day in np.nonzero(s.has_outcome())[0]:
                triples.append((pid, int(day), float(s.outcomes[day])))
        return triples


def _empty_series(schema):
    T, D = schema.study_length, schema.feature_dim
    return (
        np.full((T, D), np.nan),
        np.full(T, np.nan),
        np.zeros(T, dtype=bool),
    )


def _make_panel(schema, raw):
    series = {}
    for pid in sorted(raw):
        feats, outs, imp = raw[pid]
        series[pid] = PersonSeries(_frozen(feats), _frozen(outs), _frozen(imp))
    return Panel(schema, series)


def load_panel(path, schema):
    """Read a panel CSV (``person_id,day,outcome,f0..f{D-1}``).

    The outcome field may be empty and the feature block may be entirely
    empty on a row; a partially filled feature block is a format error.
    Rows may arrive in any order; the panel is day-sorted by construction.
    """
    D = schema.feature_dim
    expected_header = ["person_id", "day", "outcome"] + [f"f{i}" for i in range(D)]
    raw = {}
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError("empty file", line_number=1)
        if header != expected_header:
            raise PanelFormatError(
                f"header does not match declared feature_dim={D}: {header[:4]}...",
                line_number=1,
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 + D:
                raise PanelFormatError(
                    f"expected {3 + D} fields, got {len(row)}", line_number=line_no
                )
            pid = row[0]
            if not pid:
                raise PanelFormatError("empty person_id", line_number=line_no)
            try:
                day = int(row[1])
            except ValueError:
                raise PanelFormatError(f"bad day {row[1]!r}", line_number=line_no)
            if not 0 <= day < schema.study_length:
                raise PanelFormatError(
                    f"day {day} outside [0, {schema.study_length})", line_number=line_no
                )
            if (pid, day) in seen:
                raise DuplicateKeyError(
                    f"duplicate (person, day) = ({pid}, {day})", line_number=line_no
                )
            seen.add((pid, day))
            if pid not in raw:
                raw[pid] = _empty_series(schema)
            feats, outs, _ = raw[pid]
            if row[2] != "":
                try:
                    outcome = float(row[2])
                except ValueError:
                    raise PanelFormatError(f"bad outcome {row[2]!r}", line_number=line_no)
                if not schema.outcome_min <= outcome <= schema.outcome_max:
                    raise PanelFormatError(
                        f"outcome {outcome} outside "
                        f"[{schema.outcome_min}, {schema.outcome_max}]",
                        line_number=line_no,
                    )
                outs[day] = outcome
            fblock = row[3:]
            filled = [f for f in fblock if f != ""]
            if filled and len(filled) != D:
                raise PanelFormatError(
                    f"feature block must be fully present or fully empty "
                    f"({len(filled)} of {D} filled)",
                    line_number=line_no,
                )
            if filled:
                try:
                    feats[day] = [float(f) for f in fblock]
                except ValueError:
                    raise PanelFormatError("bad feature value", line_number=line_no)
                if not np.all(np.isfinite(feats[day])):
                    raise PanelFormatError("non-finite feature value", line_number=line_no)
    return _make_panel(schema, raw)


def save_panel(panel, path):
    """Write the panel CSV; only days carrying data get a row."""
    D = panel.feature_dim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["person_id", "day", "outcome"] + [f"f{i}" for i in range(D)])
        for pid in panel.person_ids:
            s = panel.series[pid]
            has_f = s.has_features()
            has_y = s.has_outcome()
            for day in np.nonzero(has_f | has_y)[0]:
                out = repr(float(s.outcomes[day])) if has_y[day] else ""
                if has_f[day]:
                    fvals = [repr(float(v)) for v in s.features[day]]
                else:
                    fvals = [""] * D
                writer.writerow([pid, int(day), out] + fvals)


def filter_coverage(panel, min_fraction):
    """Keep persons with enough observed-outcome days.

    A person survives when their count of days with an observed outcome is
    at least ``min_fraction * study_length``.  An empty result is flagged
    with a warning, not an error.
    """
    check_fraction(min_fraction, "min_fraction", inclusive_high=True)
    threshold = min_fraction * panel.study_length
    keep = [
        pid
        for pid in panel.person_ids
        if int(panel.series[pid].has_outcome().sum()) >= threshold
    ]
    if not keep:
        warnings.warn("coverage filter removed every person", CoverageWarning)
    return panel.subset(keep)


def impute_locf(panel):
    """Carry each person's most recent feature vector forward over gaps.

    Outcomes are never imputed.  Days before a person's first feature
    observation stay feature-less.  Idempotent: re-imputing an imputed
    panel reproduces it bit for bit.
    """
    raw = {}
    for pid in panel.person_ids:
        s = panel.series[pid]
        feats = s.features.copy()
        imputed = s.imputed.copy()
        last = None
        for day in range(panel.study_length):
            if not np.isnan(feats[day, 0]):
                # already-imputed days are valid carry sources (idempotence)
                last = feats[day]
            elif last is not None:
                feats[day] = last
                imputed[day] = True
        raw[pid] = (feats, s.outcomes.copy(), imputed)
    return _make_panel(panel.schema, raw)


@dataclass(frozen=True)
class HistoryDataset:
    """Supervised instances derived from a panel under a task mode.

    Each instance keeps its ``history`` per-day feature vectors in
    chronological order (oldest first); stacking or pooling into model
    inputs happens downstream.
    """

    person_ids: tuple          # per-instance person id
    anchor_days: np.ndarray    # per-instance anchor day (int)
    windows: np.ndarray        # (N, h, D) chronological feature windows
    targets: np.ndarray        # (N,) observed outcomes
    history: int
    mode: TaskMode
    study_length: int
    feature_dim: int

    @property
    def n_instances(self):
        return len(self.person_ids)

    def keys(self):
        return list(zip(self.person_ids, (int(d) for d in self.anchor_days)))

    def select(self, mask):
        """Row subset in original order (mask or index array)."""
        idx = np.asarray(mask)
        if idx.dtype == bool:
            idx = np.nonzero(idx)[0]
        return HistoryDataset(
            person_ids=tuple(self.person_ids[i] for i in idx),
            anchor_days=_frozen(self.anchor_days[idx].copy()),
            windows=_frozen(self.windows[idx].copy()),
            targets=_frozen(self.targets[idx].copy()),
            history=self.history,
            mode=self.mode,
            study_length=self.study_length,
            feature_dim=self.feature_dim,
        )


def build_instances(panel, mode, history_len):
    """Emit one instance per admissible (person, anchor day).

    Nowcasting targets the anchor day's outcome; one-day-ahead
    forecasting targets the next day's.  An anchor is admissible when the
    target outcome is observed and features are available (observed or
    carried forward) on every day of the length-``history_len`` window
    ending at the anchor.
    """
    h = check_positive_int(history_len, "history_len")
    if h > panel.study_length:
        raise ParameterError(
            f"history_len {h} exceeds study_length {panel.study_length}"
        )
    persons, anchors, windows, targets = [], [], [], []
    for pid in panel.person_ids:
        s = panel.series[pid]
        has_f = s.has_features()
        has_y = s.has_outcome()
        for anchor in range(h - 1, panel.study_length):
            if mode is TaskMode.NOWCAST:
                target_day = anchor
            else:
                target_day = anchor + 1
                if target_day >= panel.study_length:
                    continue
            if not has_y[target_day]:
                continue
            if not np.all(has_f[anchor - h + 1 : anchor + 1]):
                continue
            persons.append(pid)
            anchors.append(anchor)
            windows.append(s.features[anchor - h + 1 : anchor + 1])
            targets.append(s.outcomes[target_day])
    if windows:
        win = np.array(windows, dtype=np.float64)
    else:
        win = np.zeros((0, h, panel.feature_dim))
    return HistoryDataset(
        person_ids=tuple(persons),
        anchor_days=_frozen(np.asarray(anchors, dtype=np.int64)),
        windows=_frozen(win),
        targets=_frozen(np.asarray(targets, dtype=np.float64)),
        history=h,
        mode=mode,
        study_length=panel.study_length,
        feature_dim=panel.feature_dim,
    )
