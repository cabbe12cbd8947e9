"""Config-driven experiment orchestration.

One run walks the full grid: build instances per history length, split
under each regime, carve a regime-matched dev set, audit for leakage,
reduce features on the training rows, fit every model kind, score all
scopes on the test side, and compare against the train-mean baseline
with a paired one-sided t-test.  Every configured cell either succeeds
or carries an explicit failure record; sibling cells are never aborted.

All result CSVs are byte-deterministic for a fixed config: floats are
written with ``repr`` and wall-clock times go only to the run log.
"""

import concurrent.futures
import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateTestError, LongpanelError, ParameterError
from .features import HistoryEncoding, PcaReducer, encode_windows
from .metrics import (
    MAE,
    METRIC_NAMES,
    PredictionSet,
    mae,
    paired_one_sided_t,
    scoped_report,
)
from .models import (
    DEFAULT_PENALTY_GRID,
    CausalWindowTransformer,
    MeanBaseline,
    param_hash,
    save_model,
    select_ridge,
)
from .panel import PanelSchema, TaskMode, build_instances, filter_coverage, impute_locf, load_panel, save_panel
from .splits import Assignment, Regime, audit_plan, carve_dev, mask_to_match, split_cross_and_prospective, split_cross_sectional, split_prospective, split_traditional
from .synthetic import CohortSpec, generate

MODEL_KINDS = ("mean", "ar", "boe", "transformer")

_ENCODINGS = {
    "ar": HistoryEncoding.STACKED,
    "boe": HistoryEncoding.POOLED,
    "transformer": HistoryEncoding.SEQUENCE,
}


def derive_seed(*parts):
    """Stable 63-bit seed from a list of labels; platform-independent."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (see README for the JSON layout)."""

    task: TaskMode
    regimes: tuple
    models: tuple
    hidden_sizes: tuple
    history_lengths: tuple
    panel_path: str = None
    panel_schema: PanelSchema = None
    synthetic: CohortSpec = None
    test_fraction: float = 0.3
    test_fraction_people: float = 0.3
    cutoff_day: int = None
    dev_fraction: float = 0.2
    split_seed: int = 0
    stratify_by_mean: bool = True
    strat_bins: int = 5
    match_counts: bool = False
    coverage_min_fraction: float = 0.5
    impute: bool = True
    penalty_grid: tuple = DEFAULT_PENALTY_GRID
    transformer_options: dict = field(default_factory=dict)
    metrics: tuple = METRIC_NAMES
    smape_eps: float = 0.0
    shared_model: bool = False
    save_models: bool = False
    seed: int = 0
    raw: dict = field(default=None, repr=False)

    def __post_init__(self):
        if (self.panel_path is None) == (self.synthetic is None):
            raise ParameterError(
                "config must name exactly one of a panel file or a synthetic cohort"
            )
        if self.panel_path is not None and self.panel_schema is None:
            raise ParameterError("a panel file needs an explicit schema")
        for name in ("regimes", "models", "hidden_sizes", "history_lengths",
                     "penalty_grid", "metrics"):
            if len(getattr(self, name)) == 0:
                raise ParameterError(f"{name} must be non-empty")
        for kind in self.models:
            if kind not in MODEL_KINDS:
                raise ParameterError(f"unknown model kind {kind!r}")
        for h in self.history_lengths:
            if int(h) < 1:
                raise ParameterError("history lengths must be >= 1")

    @classmethod
    def from_dict(cls, doc):
        split = dict(doc.get("split", {}))
        panel = doc.get("panel")
        synth = doc.get("synthetic")
        schema = None
        if panel is not None and "schema" in panel:
            schema = PanelSchema(**panel["schema"])
        return cls(
            task=TaskMode.parse(doc.get("task", "nowcast")),
            regimes=tuple(Regime.parse(r) for r in doc.get("regimes", [])),
            models=tuple(doc.get("models", [])),
            hidden_sizes=tuple(
                None if h is None else int(h)
                for h in doc.get("hidden_sizes", [None])
            ),
            history_lengths=tuple(int(h) for h in doc.get("history_lengths", [1])),
            panel_path=None if panel is None else panel.get("path"),
            panel_schema=schema,
            synthetic=None if synth is None else CohortSpec(**synth),
            test_fraction=float(split.get("test_fraction", 0.3)),
            test_fraction_people=float(split.get("test_fraction_people", 0.3)),
            cutoff_day=(
                None if split.get("cutoff_day") is None
                else int(split["cutoff_day"])
            ),
            dev_fraction=float(split.get("dev_fraction", 0.2)),
            split_seed=int(split.get("seed", 0)),
            stratify_by_mean=bool(split.get("stratify_by_mean", True)),
            strat_bins=int(split.get("strat_bins", 5)),
            match_counts=bool(split.get("match_counts", False)),
            coverage_min_fraction=float(doc.get("coverage_min_fraction", 0.5)),
            impute=bool(doc.get("impute", True)),
            penalty_grid=tuple(
                float(v) for v in doc.get("penalty_grid", DEFAULT_PENALTY_GRID)
            ),
            transformer_options=dict(doc.get("transformer", {})),
            metrics=tuple(doc.get("metrics", METRIC_NAMES)),
            smape_eps=float(doc.get("smape_eps", 0.0)),
            shared_model=bool(doc.get("shared_model", False)),
            save_models=bool(doc.get("save_models", False)),
            seed=int(doc.get("seed", 0)),
            raw=doc,
        )

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls.from_dict(doc)


@dataclass(frozen=True)
class CellKey:
    regime: Regime
    model: str
    hidden: object  # int or None
    history: int

    def label(self):
        hidden = "none" if self.hidden is None else str(self.hidden)
        return f"{self.regime.value}_{self.model}_hid{hidden}_h{self.history}"


@dataclass
class CellResult:
    key: CellKey
    status: str = "ok"
    error: str = None
    report: object = None
    trace: object = None
    n_train: int = 0
    n_dev: int = 0
    n_test: int = 0
    model_mae: float = float("nan")
    baseline_mae: float = float("nan")
    t_stat: float = float("nan")
    p_value: float = float("nan")
    param_hash: str = ""
    wall_time: float = 0.0
    model: object = None
    predictions: object = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    cells: list
    plans: dict  # (regime, history) -> SplitPlan
    audits: dict  # (regime, history) -> AuditReport
    panel: object = None
    truth: object = None


# -- cell execution ------------------------------------------------------


@dataclass(frozen=True)
class _CellTask:
    """Everything one cell needs, precomputed so workers stay pure."""

    key: CellKey
    train_X: np.ndarray
    train_y: np.ndarray
    dev_X: np.ndarray
    dev_y: np.ndarray
    test_X: np.ndarray
    test_y: np.ndarray
    test_people: tuple
    test_days: np.ndarray
    penalty_grid: tuple
    metrics: tuple
    smape_eps: float
    transformer_options: dict
    fit_seed: int
    shared_from: object = None  # CellKey of the training cell in shared mode


def _fit_cell_model(task):
    """Train the cell's model; returns (model, trace)."""
    kind = task.key.model
    if kind == "mean":
        y = np.concatenate([task.train_y, task.dev_y])
        return MeanBaseline().fit(np.zeros((len(y), 1)), y), None
    if kind in ("ar", "boe"):
        model, trace = select_ridge(
            task.train_X,
            task.train_y,
            task.dev_X,
            task.dev_y,
            grid=task.penalty_grid,
            encoding=_ENCODINGS[kind],
            history=task.key.history,
            dev_regime=task.key.regime,
        )
        return model, trace
    options = dict(task.transformer_options)
    options.setdefault("seed", task.fit_seed)
    model = CausalWindowTransformer(window=task.key.history, **options)
    model.fit(task.train_X, task.train_y, task.dev_X, task.dev_y)
    return model, None


def _score_cell(task, model, trace):
    started = time.perf_counter()
    y_pred = model.predict(task.test_X)
    preds = PredictionSet(
        person_ids=task.test_people,
        days=task.test_days,
        y_true=task.test_y,
        y_pred=y_pred,
    )
    report = scoped_report(
        preds,
        split=task.key.regime.value,
        metrics=task.metrics,
        eps=task.smape_eps,
    )
    base_mean = float(np.mean(np.concatenate([task.train_y, task.dev_y])))
    base_errors = np.abs(task.test_y - base_mean)
    model_errors = np.abs(task.test_y - y_pred)
    try:
        t_stat, p_value = paired_one_sided_t(model_errors, base_errors)
    except DegenerateTestError:
        t_stat, p_value = float("nan"), float("nan")
    return CellResult(
        key=task.key,
        report=report,
        trace=trace,
        n_train=len(task.train_y),
        n_dev=len(task.dev_y),
        n_test=len(task.test_y),
        model_mae=mae(task.test_y, y_pred),
        baseline_mae=float(np.mean(base_errors)),
        t_stat=t_stat,
        p_value=p_value,
        param_hash=param_hash(model),
        wall_time=time.perf_counter() - started,
        model=model,
        predictions=preds,
    )


def _run_cell(task):
    started = time.perf_counter()
    try:
        model, trace = _fit_cell_model(task)
        result = _score_cell(task, model, trace)
        result.wall_time = time.perf_counter() - started
        return result
    except Exception as exc:  # cell isolation: siblings must keep running
        return CellResult(
            key=task.key,
            status="failed",
            error=f"{type(exc).__name__}: {exc}",
            wall_time=time.perf_counter() - started,
        )


# -- orchestration -------------------------------------------------------


def _load_or_generate(config):
    if config.synthetic is not None:
        return generate(config.synthetic)
    return load_panel(config.panel_path, config.panel_schema), None


def _prepare_panel(config):
    panel, truth = _load_or_generate(config)
    if config.coverage_min_fraction > 0:
        panel = filter_coverage(panel, config.coverage_min_fraction)
    if config.impute:
        panel = impute_locf(panel)
    return panel, truth


def _build_plan(dataset, regime, config, cutoff, h):
    seed = config.split_seed
    if regime is Regime.TRADITIONAL:
        return split_traditional(
            dataset, config.test_fraction, derive_seed(seed, "trad", h)
        )
    if regime is Regime.CROSS_SECTIONAL:
        return split_cross_sectional(
            dataset,
            config.test_fraction_people,
            derive_seed(seed, "cross", h),
            stratify_by_mean=config.stratify_by_mean,
            strat_bins=config.strat_bins,
        )
    if regime is Regime.PROSPECTIVE:
        return split_prospective(dataset, cutoff)
    helper = split_cross_sectional(
        dataset,
        config.test_fraction_people,
        derive_seed(seed, "people", h),
        stratify_by_mean=config.stratify_by_mean,
        strat_bins=config.strat_bins,
    )
    return split_cross_and_prospective(dataset, helper.test_people, cutoff)


def _fit_reducer(dataset, plan, hidden):
    """PCA on the train rows' day vectors; None when no reduction applies."""
    if hidden is None:
        return None
    train = dataset.select(plan.mask(Assignment.TRAIN))
    n, h, d = train.windows.shape
    rows = train.windows.reshape(n * h, d)
    reducer = PcaReducer(n_components=hidden)
    reducer.fit(rows, assignments=[Assignment.TRAIN] * len(rows))
    return reducer


def _encoded_split(dataset, plan, assignment, kind, reducer):
    part = dataset.select(plan.mask(assignment))
    windows = part.windows
    if reducer is not None:
        windows = reducer.transform_windows(windows)
    if kind == "mean":
        X = np.zeros((part.n_instances, 1))
    else:
        X = encode_windows(windows, _ENCODINGS[kind])
    return part, X


def _make_task(config, dataset, plan, key, reducer):
    train, train_X = _encoded_split(dataset, plan, Assignment.TRAIN, key.model, reducer)
    dev, dev_X = _encoded_split(dataset, plan, Assignment.DEV, key.model, reducer)
    test, test_X = _encoded_split(dataset, plan, Assignment.TEST, key.model, reducer)
    return _CellTask(
        key=key,
        train_X=train_X,
        train_y=train.targets,
        dev_X=dev_X,
        dev_y=dev.targets,
        test_X=test_X,
        test_y=test.targets,
        test_people=test.person_ids,
        test_days=test.anchor_days,
        penalty_grid=config.penalty_grid,
        metrics=config.metrics,
        smape_eps=config.smape_eps,
        transformer_options=config.transformer_options,
        fit_seed=derive_seed(config.seed, "fit", key.label()),
    )


@dataclass
class PreparedRun:
    """Panel, per-history instance datasets, carved plans, and audits."""

    panel: object
    truth: object
    cutoff: int
    datasets: dict  # history -> HistoryDataset
    plans: dict     # (regime, history) -> SplitPlan (dev carved)
    audits: dict    # (regime, history) -> AuditReport
    failures: dict  # (regime, history) -> error string


def prepare(config):
    """Everything up to (but excluding) model fitting."""
    panel, truth = _prepare_panel(config)
    if config.cutoff_day is not None:
        cutoff = config.cutoff_day
    else:
        cutoff = int(panel.study_length * 7 // 10)
    if not 0 < cutoff < panel.study_length:
        raise ParameterError(
            f"cutoff day {cutoff} outside (0, {panel.study_length})"
        )

    plans, audits, failures = {}, {}, {}
    datasets = {}
    for h in config.history_lengths:
        dataset = build_instances(panel, config.task, h)
        datasets[h] = dataset
        built = {}
        for regime in config.regimes:
            try:
                built[regime] = _build_plan(dataset, regime, config, cutoff, h)
            except LongpanelError as exc:
                failures[(regime, h)] = f"{type(exc).__name__}: {exc}"
        if config.match_counts and len(built) > 1:
            order = [r for r in config.regimes if r in built]
            matched = mask_to_match(
                [built[r] for r in order], derive_seed(config.split_seed, "mask", h)
            )
            built = dict(zip(order, matched))
        for regime, plan in built.items():
            try:
                plan = carve_dev(
                    plan,
                    config.dev_fraction,
                    derive_seed(config.split_seed, "dev", regime.value, h),
                )
            except LongpanelError as exc:
                failures[(regime, h)] = f"{type(exc).__name__}: {exc}"
                continue
            plans[(regime, h)] = plan
            audits[(regime, h)] = audit_plan(plan, dataset)
    return PreparedRun(
        panel=panel,
        truth=truth,
        cutoff=cutoff,
        datasets=datasets,
        plans=plans,
        audits=audits,
        failures=failures,
    )


def run(config, jobs=1):
    """Execute the full grid; every cell succeeds or records its failure."""
    prepared = prepare(config)
    datasets = prepared.datasets
    plans = prepared.plans
    audits = prepared.audits
    failures = prepared.failures

    tasks, skipped = [], []
    for regime in config.regimes:
        for h in config.history_lengths:
            plan = plans.get((regime, h))
            blocked = failures.get((regime, h))
            if plan is not None and not audits[(regime, h)].passed:
                blocked = "LeakageError: " + "; ".join(
                    audits[(regime, h)].violations
                )
            for hidden in config.hidden_sizes:
                reducer = None
                reducer_error = None
                if plan is not None and blocked is None and hidden is not None:
                    try:
                        reducer = _fit_reducer(datasets[h], plan, hidden)
                    except LongpanelError as exc:
                        reducer_error = f"{type(exc).__name__}: {exc}"
                for kind in config.models:
                    key = CellKey(regime=regime, model=kind, hidden=hidden, history=h)
                    if blocked is not None or reducer_error is not None:
                        skipped.append(
                            CellResult(
                                key=key,
                                status="failed",
                                error=blocked or reducer_error,
                            )
                        )
                        continue
                    tasks.append(_make_task(config, datasets[h], plan, key, reducer))

    if config.shared_model:
        results = _run_shared(config, tasks, jobs)
    else:
        results = _execute(tasks, jobs)
    by_key = {r.key: r for r in results}
    for cell in skipped:
        by_key[cell.key] = cell
    ordered = []
    for regime in config.regimes:
        for kind in config.models:
            for hidden in config.hidden_sizes:
                for h in config.history_lengths:
                    key = CellKey(regime=regime, model=kind, hidden=hidden, history=h)
                    if key in by_key:
                        ordered.append(by_key[key])
    return ExperimentResult(
        config=config,
        cells=ordered,
        plans=plans,
        audits=audits,
        panel=prepared.panel,
        truth=prepared.truth,
    )


def _execute(tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_cell(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_cell, t) for t in tasks]
        return [f.result() for f in futures]


def _run_shared(config, tasks, jobs):
    """Shared-model protocol: one model per (kind, hidden, h), trained
    under the first configured regime, evaluated on every regime's test
    set.  Parameter hashes are identical across evaluations by
    construction and recorded so the discipline is checkable."""
    train_regime = config.regimes[0]
    by_key = {t.key: t for t in tasks}
    results = []
    for kind in config.models:
        for hidden in config.hidden_sizes:
            for h in config.history_lengths:
                anchor_key = CellKey(train_regime, kind, hidden, h)
                anchor = by_key.get(anchor_key)
                siblings = [
                    by_key[CellKey(r, kind, hidden, h)]
                    for r in config.regimes
                    if CellKey(r, kind, hidden, h) in by_key
                ]
                if anchor is None:
                    for task in siblings:
                        results.append(
                            CellResult(
                                key=task.key,
                                status="failed",
                                error="shared-model training cell unavailable",
                            )
                        )
                    continue
                try:
                    model, trace = _fit_cell_model(anchor)
                except Exception as exc:
                    message = f"{type(exc).__name__}: {exc}"
                    for task in siblings:
                        results.append(
                            CellResult(key=task.key, status="failed", error=message)
                        )
                    continue
                for task in siblings:
                    task = replace(task, shared_from=anchor_key)
                    try:
                        result = _score_cell(task, model, trace)
                    except Exception as exc:
                        result = CellResult(
                            key=task.key,
                            status="failed",
                            error=f"{type(exc).__name__}: {exc}",
                        )
                    results.append(result)
    _ = jobs  # shared mode trains few models; parallel scoring not worth it
    return results


# -- persistence ---------------------------------------------------------


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _hidden_label(hidden):
    return "none" if hidden is None else str(hidden)


def write_audits(audits, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["regime", "history", "check", "passed", "required"])
        for (regime, h), audit in sorted(
            audits.items(), key=lambda kv: (kv[0][0].value, kv[0][1])
        ):
            for name in sorted(audit.checks):
                writer.writerow(
                    [
                        regime.value,
                        h,
                        name,
                        str(bool(audit.checks[name])).lower(),
                        str(name in audit.required).lower(),
                    ]
                )


def write_plans(prepared, out_dir):
    """Persist carved plans and their audits (the ``split`` subcommand)."""
    os.makedirs(out_dir, exist_ok=True)
    plans_dir = os.path.join(out_dir, "plans")
    os.makedirs(plans_dir, exist_ok=True)
    paths = []
    for (regime, h), plan in sorted(
        prepared.plans.items(), key=lambda kv: (kv[0][0].value, kv[0][1])
    ):
        path = os.path.join(plans_dir, f"plan_{regime.value}_h{h}.csv")
        plan.to_csv(path)
        paths.append(path)
    write_audits(prepared.audits, os.path.join(out_dir, "audits.csv"))
    return paths


def write_result(result, out_dir, runtime_seconds=None):
    """Persist a run: panel snapshot, plans, audits, reports, run log."""
    os.makedirs(out_dir, exist_ok=True)
    config = result.config

    if config.synthetic is not None and result.panel is not None:
        save_panel(result.panel, os.path.join(out_dir, "panel.csv"))
        if result.truth is not None:
            result.truth.to_csv(os.path.join(out_dir, "truth.csv"))

    plans_dir = os.path.join(out_dir, "plans")
    os.makedirs(plans_dir, exist_ok=True)
    for (regime, h), plan in sorted(
        result.plans.items(), key=lambda kv: (kv[0][0].value, kv[0][1])
    ):
        plan.to_csv(os.path.join(plans_dir, f"plan_{regime.value}_h{h}.csv"))

    write_audits(result.audits, os.path.join(out_dir, "audits.csv"))

    with open(os.path.join(out_dir, "results.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["regime", "model", "hidden", "history", "scope", "metric",
             "value", "se", "n_units", "excluded"]
        )
        for cell in result.cells:
            if cell.report is None:
                continue
            for _, scope, metric, value, se, n_units, excluded in cell.report.rows():
                writer.writerow(
                    [
                        cell.key.regime.value,
                        cell.key.model,
                        _hidden_label(cell.key.hidden),
                        cell.key.history,
                        scope,
                        metric,
                        value,
                        se,
                        n_units,
                        excluded,
                    ]
                )

    with open(os.path.join(out_dir, "cells.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["regime", "model", "hidden", "history", "status", "n_train",
             "n_dev", "n_test", "chosen_penalty", "model_mae", "baseline_mae",
             "t_stat", "p_value", "param_hash", "error"]
        )
        for cell in result.cells:
            chosen = "" if cell.trace is None else repr(cell.trace.chosen)
            writer.writerow(
                [
                    cell.key.regime.value,
                    cell.key.model,
                    _hidden_label(cell.key.hidden),
                    cell.key.history,
                    cell.status,
                    cell.n_train,
                    cell.n_dev,
                    cell.n_test,
                    chosen,
                    _fmt(cell.model_mae),
                    _fmt(cell.baseline_mae),
                    _fmt(cell.t_stat),
                    _fmt(cell.p_value),
                    cell.param_hash,
                    cell.error or "",
                ]
            )

    reports_dir = os.path.join(out_dir, "reports")
    os.makedirs(reports_dir, exist_ok=True)
    for cell in result.cells:
        if cell.report is not None:
            cell.report.write_csv(
                os.path.join(reports_dir, cell.key.label() + ".csv")
            )

    if config.save_models:
        models_dir = os.path.join(out_dir, "models")
        os.makedirs(models_dir, exist_ok=True)
        for cell in result.cells:
            if cell.model is not None:
                save_model(
                    cell.model, os.path.join(models_dir, cell.key.label() + ".txt")
                )

    log = {
        "config": config.raw,
        "runtime_seconds": runtime_seconds,
        "cells": [
            {
                "cell": cell.key.label(),
                "status": cell.status,
                "wall_time": cell.wall_time,
                "error": cell.error,
            }
            for cell in result.cells
        ],
        "n_ok": sum(1 for c in result.cells if c.status == "ok"),
        "n_failed": sum(1 for c in result.cells if c.status != "ok"),
    }
    with open(os.path.join(out_dir, "runlog.json"), "w", encoding="utf-8") as fh:
        json.dump(log, fh, indent=2)
        fh.write("\n")


def run_to_dir(config, out_dir, jobs=1):
    """``run`` + ``write_result`` + figure tables; the CLI entry path."""
    from .report import emit_report

    started = time.perf_counter()
    result = run(config, jobs=jobs)
    write_result(result, out_dir, runtime_seconds=time.perf_counter() - started)
    emit_report(out_dir, fmt="both")
    return result
