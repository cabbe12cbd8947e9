"""Shared test fixtures and the acceptance-criteria terminal summary."""

import numpy as np
import pytest

from longpanel.panel import PanelSchema, Panel, PersonSeries
from longpanel.synthetic import CohortSpec, generate

# (number, label, passed, detail) tuples recorded by test_acceptance.py
_ACCEPTANCE_LOG = []


def record_criterion(number, label, passed, detail=""):
    _ACCEPTANCE_LOG.append((number, label, bool(passed), detail))
    line = f"[criterion {number:2d}] {'PASS' if passed else 'FAIL'}  {label}"
    if detail:
        line += f"  ({detail})"
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for number, label, passed, detail in sorted(_ACCEPTANCE_LOG):
        line = f"[criterion {number:2d}] {'PASS' if passed else 'FAIL'}  {label}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


def _frozen(arr):
    arr.flags.writeable = False
    return arr


def make_panel(schema, cells):
    """Build a panel from {person: {day: (features_or_None, outcome_or_None)}}.

    Bypasses file I/O so tests can state tiny panels literally.
    """
    series = {}
    for pid, days in cells.items():
        feats = np.full((schema.study_length, schema.feature_dim), np.nan)
        outs = np.full(schema.study_length, np.nan)
        imp = np.zeros(schema.study_length, dtype=bool)
        for day, (f, y) in days.items():
            if f is not None:
                feats[day] = np.asarray(f, dtype=np.float64)
            if y is not None:
                outs[day] = float(y)
        series[pid] = PersonSeries(_frozen(feats), _frozen(outs), _frozen(imp))
    return Panel(schema, series)


def small_cohort(seed, n_people=6, study_length=12, feature_dim=3, **kw):
    """A quick dense synthetic (panel, truth) pair for property tests."""
    spec = CohortSpec(
        n_people=n_people,
        study_length=study_length,
        feature_dim=feature_dim,
        seed=seed,
        **kw,
    )
    return generate(spec)


@pytest.fixture
def toy_schema():
    return PanelSchema(study_length=6, feature_dim=2, outcome_min=1.0, outcome_max=5.0)
