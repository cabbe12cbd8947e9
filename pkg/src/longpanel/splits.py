"""Evaluation split regimes with machine-checkable leakage guarantees.

Four regimes cover the generalization targets for person-day panels:
random instance splits (traditional), held-out people (cross-sectional),
held-out future days (prospective), and both at once.  A plan assigns
every instance of a dataset to exactly one of train / dev / test /
unused, serializes to CSV, and can be re-audited at any time.
"""

import csv
import enum
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegeneratePlanError,
    InsufficientCohortError,
    LeakageError,
    ParameterError,
)
from .validation import check_fraction, check_positive_int


class Assignment(enum.Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"
    UNUSED = "unused"


_CODES = {a: i for i, a in enumerate(Assignment)}
_BY_CODE = list(Assignment)


class Regime(enum.Enum):
    TRADITIONAL = "traditional"
    CROSS_SECTIONAL = "cross_sectional"
    PROSPECTIVE = "prospective"
    CROSS_SECTIONAL_PROSPECTIVE = "cross_sectional_prospective"

    @classmethod
    def parse(cls, name):
        for regime in cls:
            if regime.value == name or regime.name.lower() == str(name).lower():
                return regime
        raise ParameterError(f"unknown regime {name!r}")


@dataclass(frozen=True)
class StratificationSpec:
    """Equal-count strata over person-mean outcome for cohort sampling."""

    n_bins: int
    per_bin_sample: int

    def __post_init__(self):
        check_positive_int(self.n_bins, "n_bins")
        check_positive_int(self.per_bin_sample, "per_bin_sample")


@dataclass(frozen=True)
class SplitPlan:
    """Per-instance assignment under one regime.

    ``keys`` holds the dataset's (person, day) pairs in dataset order and
    ``codes`` the aligned assignment codes; the plan is a value object and
    never mutates.
    """

    regime: Regime
    keys: tuple
    codes: np.ndarray
    cutoff_day: int = None
    train_people: frozenset = None
    test_people: frozenset = None
    seed: int = None
    degenerate: bool = False

    def __post_init__(self):
        if len(self.keys) != len(self.codes):
            raise ParameterError("keys and codes must align")
        self.codes.flags.writeable = False

    @property
    def n_instances(self):
        return len(self.keys)

    def mask(self, assignment):
        return self.codes == _CODES[assignment]

    def count(self, assignment):
        return int(self.mask(assignment).sum())

    def counts(self):
        return {a: self.count(a) for a in Assignment}

    def assignment_of(self, person, day):
        try:
            i = self.keys.index((person, day))
        except ValueError:
            raise KeyError((person, day))
        return _BY_CODE[self.codes[i]]

    def people_with(self, assignment):
        m = self.mask(assignment)
        return {self.keys[i][0] for i in np.nonzero(m)[0]}

    def days_with(self, assignment):
        m = self.mask(assignment)
        return np.array([self.keys[i][1] for i in np.nonzero(m)[0]], dtype=np.int64)

    def with_codes(self, codes, **overrides):
        return replace(self, codes=codes, **overrides)

    # -- serialization ---------------------------------------------------

    def to_csv(self, path):
        header = {
            "regime": self.regime.value,
            "cutoff_day": self.cutoff_day,
            "seed": self.seed,
            "degenerate": self.degenerate,
            "train_people": sorted(self.train_people) if self.train_people else None,
            "test_people": sorted(self.test_people) if self.test_people else None,
        }
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            writer = csv.writer(fh)
            writer.writerow(["person_id", "day", "assignment"])
            for (pid, day), code in zip(self.keys, self.codes):
                writer.writerow([pid, day, _BY_CODE[code].value])

    @classmethod
    def from_csv(cls, path):
        header = {}
        keys, codes = [], []
        with open(path, newline="", encoding="utf-8") as fh:
            lines = [ln for ln in fh]
        body_start = 0
        for i, ln in enumerate(lines):
            if ln.startswith("#"):
                header.update(json.loads(ln[1:].strip()))
                body_start = i + 1
            else:
                break
        reader = csv.reader(lines[body_start:])
        cols = next(reader)
        if cols != ["person_id", "day", "assignment"]:
            raise ParameterError(f"unexpected plan columns {cols}")
        for row in reader:
            if not row:
                continue
            keys.append((row[0], int(row[1])))
            codes.append(_CODES[Assignment(row[2])])
        return cls(
            regime=Regime(header["regime"]),
            keys=tuple(keys),
            codes=np.asarray(codes, dtype=np.int8),
            cutoff_day=header.get("cutoff_day"),
            train_people=frozenset(header["train_people"])
            if header.get("train_people")
            else None,
            test_people=frozenset(header["test_people"])
            if header.get("test_people")
            else None,
            seed=header.get("seed"),
            degenerate=bool(header.get("degenerate", False)),
        )


def _floor_count(n, fraction):
    return int(math.floor(n * fraction + 1e-9))


def _round_count(n, fraction):
    return int(math.floor(n * fraction + 0.5))


def _new_codes(dataset):
    return np.full(dataset.n_instances, _CODES[Assignment.TRAIN], dtype=np.int8)


# -- cohort selection ----------------------------------------------------


def select_cohort(panel, spec, variation_floor, seed, early_days=None):
    """Draw a variation-filtered, outcome-stratified person sample.

    Persons whose observed-outcome standard deviation over the whole
    study, over the first ``early_days`` days, or over the remaining days
    falls below ``variation_floor`` are dropped.  Survivors are sorted by
    mean outcome, cut into equal-count strata, and sampled uniformly per
    stratum.  Defaults put the early/late boundary at two thirds of the
    study window.
    """
    if variation_floor < 0:
        raise ParameterError("variation_floor must be >= 0")
    if early_days is None:
        early_days = (panel.study_length * 2) // 3
    eligible = []
    for pid in panel.person_ids:
        s = panel.series[pid]
        days = np.nonzero(s.has_outcome())[0]
        values = s.outcomes[days]
        windows = (
            values,
            values[days < early_days],
            values[days >= early_days],
        )
        sds = [float(np.std(w)) if len(w) else 0.0 for w in windows]
        if all(sd >= variation_floor for sd in sds):
            eligible.append((float(np.mean(values)) if len(values) else 0.0, pid))
    eligible.sort()
    ordered = [pid for _, pid in eligible]
    if len(ordered) < spec.n_bins:
        raise InsufficientCohortError(
            f"{len(ordered)} eligible persons for {spec.n_bins} strata"
        )
    strata = np.array_split(np.arange(len(ordered)), spec.n_bins)
    rng = np.random.default_rng(seed)
    chosen = []
    for stratum in strata:
        if len(stratum) < spec.per_bin_sample:
            raise InsufficientCohortError(
                f"stratum of {len(stratum)} persons cannot supply "
                f"{spec.per_bin_sample} samples"
            )
        picks = rng.choice(len(stratum), size=spec.per_bin_sample, replace=False)
        chosen.extend(ordered[stratum[i]] for i in sorted(picks))
    return sorted(chosen)


# -- regime constructors -------------------------------------------------


def split_traditional(dataset, test_fraction, seed):
    """Uniform instance-level split with no person or time structure."""
    check_fraction(test_fraction, "test_fraction")
    n = dataset.n_instances
    codes = _new_codes(dataset)
    n_test = _floor_count(n, test_fraction)
    rng = np.random.default_rng(seed)
    test_idx = rng.permutation(n)[:n_test]
    codes[test_idx] = _CODES[Assignment.TEST]
    return SplitPlan(
        regime=Regime.TRADITIONAL,
        keys=tuple(dataset.keys()),
        codes=codes,
        seed=int(seed),
        degenerate=(n_test == 0 or n_test == n),
    )


def _person_means(dataset):
    sums, counts, order = {}, {}, []
    for pid, y in zip(dataset.person_ids, dataset.targets):
        if pid not in sums:
            order.append(pid)
            sums[pid] = 0.0
            counts[pid] = 0
        sums[pid] += float(y)
        counts[pid] += 1
    return {pid: sums[pid] / counts[pid] for pid in order}


def split_cross_sectional(
    dataset, test_fraction_people, seed, stratify_by_mean=True, strat_bins=5
):
    """Hold out whole persons, optionally stratified by mean outcome.

    Stratification sorts persons by their mean target into quantile bins
    and samples test persons proportionally per bin, so the held-out set
    spans the outcome range.
    """
    check_fraction(test_fraction_people, "test_fraction_people")
    means = _person_means(dataset)
    people = sorted(means)
    if len(people) < 2:
        raise DegeneratePlanError("cross-sectional split needs at least 2 persons")
    n_test = _round_count(len(people), test_fraction_people)
    if n_test == 0:
        raise DegeneratePlanError("test_fraction_people rounds to 0 test persons")
    if n_test == len(people):
        raise DegeneratePlanError("test_fraction_people leaves no train persons")
    rng = np.random.default_rng(seed)
    if stratify_by_mean:
        ranked = sorted(people, key=lambda pid: (means[pid], pid))
        bins = np.array_split(np.arange(len(ranked)), min(strat_bins, len(ranked)))
        quotas = _proportional_quotas([len(b) for b in bins], n_test)
        test_people = set()
        for stratum, quota in zip(bins, quotas):
            picks = rng.choice(len(stratum), size=quota, replace=False)
            test_people.update(ranked[stratum[i]] for i in sorted(picks))
    else:
        picks = rng.choice(len(people), size=n_test, replace=False)
        test_people = {people[i] for i in sorted(picks)}
    codes = _new_codes(dataset)
    for i, pid in enumerate(dataset.person_ids):
        if pid in test_people:
            codes[i] = _CODES[Assignment.TEST]
    return SplitPlan(
        regime=Regime.CROSS_SECTIONAL,
        keys=tuple(dataset.keys()),
        codes=codes,
        train_people=frozenset(p for p in people if p not in test_people),
        test_people=frozenset(test_people),
        seed=int(seed),
    )


def _proportional_quotas(sizes, total):
    """Largest-remainder apportionment of ``total`` across bin sizes."""
    n = sum(sizes)
    raw = [total * s / n for s in sizes]
    base = [int(math.floor(q)) for q in raw]
    base = [min(b, s) for b, s in zip(base, sizes)]
    remaining = total - sum(base)
    order = sorted(
        range(len(sizes)), key=lambda i: (-(raw[i] - base[i]), i)
    )
    for i in order:
        if remaining == 0:
            break
        if base[i] < sizes[i]:
            base[i] += 1
            remaining -= 1
    if remaining:
        raise DegeneratePlanError("cannot apportion test persons across strata")
    return base


def split_prospective(dataset, cutoff_day):
    """Train on days up to the cutoff (inclusive), test on later days."""
    tau = int(cutoff_day)
    if not 0 < tau < dataset.study_length:
        raise ParameterError(
            f"cutoff_day must lie in (0, {dataset.study_length}), got {tau}"
        )
    codes = _new_codes(dataset)
    test = dataset.anchor_days > tau
    codes[test] = _CODES[Assignment.TEST]
    n_test = int(test.sum())
    return SplitPlan(
        regime=Regime.PROSPECTIVE,
        keys=tuple(dataset.keys()),
        codes=codes,
        cutoff_day=tau,
        degenerate=(n_test == 0 or n_test == dataset.n_instances),
    )


def split_cross_and_prospective(dataset, test_people, cutoff_day):
    """Test persons at future days; train persons at past days; rest unused."""
    tau = int(cutoff_day)
    if not 0 < tau < dataset.study_length:
        raise ParameterError(
            f"cutoff_day must lie in (0, {dataset.study_length}), got {tau}"
        )
    test_people = frozenset(test_people)
    if not test_people:
        raise ParameterError("test_people must be non-empty")
    universe = set(dataset.person_ids)
    unknown = test_people - universe
    if unknown:
        raise ParameterError(f"test_people not in dataset: {sorted(unknown)}")
    codes = np.full(dataset.n_instances, _CODES[Assignment.UNUSED], dtype=np.int8)
    for i, (pid, day) in enumerate(zip(dataset.person_ids, dataset.anchor_days)):
        if pid in test_people:
            if day > tau:
                codes[i] = _CODES[Assignment.TEST]
        elif day <= tau:
            codes[i] = _CODES[Assignment.TRAIN]
    n_train = int((codes == _CODES[Assignment.TRAIN]).sum())
    n_test = int((codes == _CODES[Assignment.TEST]).sum())
    return SplitPlan(
        regime=Regime.CROSS_SECTIONAL_PROSPECTIVE,
        keys=tuple(dataset.keys()),
        codes=codes,
        cutoff_day=tau,
        train_people=frozenset(universe - test_people),
        test_people=test_people,
        degenerate=(n_train == 0 or n_test == 0),
    )


# -- plan surgery --------------------------------------------------------


def mask_to_match(plans, seed):
    """Equalize train and test counts across plans by random masking.

    Moves a minimal random set of instances to unused so every plan ends
    with the minimum train count and minimum test count found across the
    inputs.  Plans must share one instance universe.
    """
    if len(plans) <= 1:
        return list(plans)
    universe = plans[0].keys
    for plan in plans[1:]:
        if plan.keys != universe:
            raise ParameterError("plans do not share an instance universe")
    target = {
        a: min(p.count(a) for p in plans)
        for a in (Assignment.TRAIN, Assignment.TEST)
    }
    out = []
    for i, plan in enumerate(plans):
        codes = plan.codes.copy()
        rng = np.random.default_rng([int(seed), i])
        for a in (Assignment.TRAIN, Assignment.TEST):
            idx = np.nonzero(codes == _CODES[a])[0]
            excess = len(idx) - target[a]
            if excess > 0:
                drop = rng.choice(len(idx), size=excess, replace=False)
                codes[idx[drop]] = _CODES[Assignment.UNUSED]
        out.append(plan.with_codes(codes))
    return out


def carve_dev(plan, dev_fraction, seed):
    """Reassign part of train to dev using the plan's own regime logic.

    Traditional plans hold out random train instances; cross-sectional
    plans hold out whole train persons; prospective plans hold out the
    latest training days; the combined regime holds out train persons at
    the latest training days (mirroring its train/test geometry, so the
    freed cells become unused).
    """
    check_fraction(dev_fraction, "dev_fraction")
    codes = plan.codes.copy()
    train_idx = np.nonzero(codes == _CODES[Assignment.TRAIN])[0]
    if len(train_idx) < 2:
        raise DegeneratePlanError("train side too small to carve a dev set")
    rng = np.random.default_rng(seed)

    if plan.regime is Regime.TRADITIONAL:
        n_dev = _floor_count(len(train_idx), dev_fraction)
        if n_dev == 0 or n_dev == len(train_idx):
            raise DegeneratePlanError("dev_fraction leaves no usable carve")
        picks = rng.permutation(len(train_idx))[:n_dev]
        codes[train_idx[picks]] = _CODES[Assignment.DEV]

    elif plan.regime is Regime.CROSS_SECTIONAL:
        dev_people = _carve_people(plan, train_idx, dev_fraction, rng)
        for i in train_idx:
            if plan.keys[i][0] in dev_people:
                codes[i] = _CODES[Assignment.DEV]

    elif plan.regime is Regime.PROSPECTIVE:
        dev_days = _carve_days(plan, train_idx, dev_fraction)
        for i in train_idx:
            if plan.keys[i][1] in dev_days:
                codes[i] = _CODES[Assignment.DEV]

    elif plan.regime is Regime.CROSS_SECTIONAL_PROSPECTIVE:
        dev_people = _carve_people(plan, train_idx, dev_fraction, rng)
        dev_days = _carve_days(plan, train_idx, dev_fraction)
        for i in train_idx:
            pid, day = plan.keys[i]
            in_people = pid in dev_people
            in_days = day in dev_days
            if in_people and in_days:
                codes[i] = _CODES[Assignment.DEV]
            elif in_people or in_days:
                codes[i] = _CODES[Assignment.UNUSED]

    if not np.any(codes == _CODES[Assignment.DEV]):
        raise DegeneratePlanError("dev carve produced an empty dev set")
    if not np.any(codes == _CODES[Assignment.TRAIN]):
        raise DegeneratePlanError("dev carve consumed the whole train set")
    return plan.with_codes(codes)


def _carve_people(plan, train_idx, fraction, rng):
    people = sorted({plan.keys[i][0] for i in train_idx})
    n_dev = max(1, _round_count(len(people), fraction))
    if n_dev >= len(people):
        raise DegeneratePlanError("dev_fraction would consume every train person")
    picks = rng.choice(len(people), size=n_dev, replace=False)
    return {people[i] for i in picks}


def _carve_days(plan, train_idx, fraction):
    days = sorted({int(plan.keys[i][1]) for i in train_idx})
    n_dev = max(1, _round_count(len(days), fraction))
    if n_dev >= len(days):
        raise DegeneratePlanError("dev_fraction would consume every train day")
    return set(days[-n_dev:])


# -- auditing ------------------------------------------------------------

_PERSON_DISJOINT_REGIMES = (Regime.CROSS_SECTIONAL, Regime.CROSS_SECTIONAL_PROSPECTIVE)
_TEMPORAL_REGIMES = (Regime.PROSPECTIVE, Regime.CROSS_SECTIONAL_PROSPECTIVE)


@dataclass(frozen=True)
class AuditReport:
    """Outcome of a leakage audit: all checks plus the regime-required set."""

    regime: Regime
    checks: dict
    required: tuple
    violations: tuple = field(default=())

    @property
    def passed(self):
        return all(self.checks[name] for name in self.required)


def audit_plan(plan, dataset=None):
    """Re-verify a plan's structural and leakage guarantees.

    All checks are evaluated and reported; only the regime-required ones
    gate ``passed``.  Traditional plans are expected to fail
    person-disjointness whenever persons contribute multiple instances;
    that recorded failure is the leakage demonstration, not an error.
    """
    checks, violations = {}, []

    counted = {}
    for key in plan.keys:
        counted[key] = counted.get(key, 0) + 1
    checks["partition"] = all(c == 1 for c in counted.values())
    if dataset is not None:
        checks["partition"] = checks["partition"] and (
            tuple(dataset.keys()) == plan.keys
        )
    if not checks["partition"]:
        violations.append("instance keys are not a one-to-one partition")

    train_people = plan.people_with(Assignment.TRAIN)
    test_people = plan.people_with(Assignment.TEST)
    dev_people = plan.people_with(Assignment.DEV)
    checks["person_disjoint"] = not (train_people & test_people)
    checks["dev_test_person_disjoint"] = not (dev_people & test_people)

    train_days = plan.days_with(Assignment.TRAIN)
    test_days = plan.days_with(Assignment.TEST)
    dev_days = plan.days_with(Assignment.DEV)
    tau = plan.cutoff_day
    if tau is not None:
        ok = True
        if len(train_days) and train_days.max() > tau:
            ok = False
        if len(dev_days) and dev_days.max() > tau:
            ok = False
        if len(test_days) and test_days.min() <= tau:
            ok = False
        checks["temporal_precedence"] = ok
    else:
        checks["temporal_precedence"] = True

    if plan.regime is Regime.PROSPECTIVE and len(dev_days):
        checks["dev_after_train"] = (
            len(train_days) == 0 or train_days.max() < dev_days.min()
        )
    else:
        checks["dev_after_train"] = True

    required = ["partition"]
    if plan.regime in _PERSON_DISJOINT_REGIMES:
        required.append("person_disjoint")
        required.append("dev_test_person_disjoint")
    if plan.regime in _TEMPORAL_REGIMES:
        required.append("temporal_precedence")
    if plan.regime is Regime.PROSPECTIVE:
        required.append("dev_after_train")

    for name in required:
        if not checks[name]:
            violations.append(f"required check failed: {name}")
    return AuditReport(
        regime=plan.regime,
        checks=checks,
        required=tuple(required),
        violations=tuple(violations),
    )


def audit(plan, dataset=None):
    """Audit and raise ``LeakageError`` on any required-check failure."""
    report = audit_plan(plan, dataset)
    if not report.passed:
        raise LeakageError("; ".join(report.violations))
    return report
