"""Evaluation and modeling toolkit for person-indexed, day-ordered panels.

The library separates four concerns that are easy to blur and costly to
get wrong in longitudinal prediction work: how instances are formed from
a panel (``panel``), how train/test separation maps to a generalization
claim (``splits``), what a metric is actually averaging over
(``metrics``), and which model family consumed which history encoding
(``features``, ``models``).  ``synthetic`` generates cohorts with known
variance structure and ``runner`` orchestrates config-driven experiment
grids behind the ``longpanel`` CLI.
"""

__version__ = "0.1.0"

from .errors import (
    DegeneratePlanError,
    DegenerateTestError,
    DivergenceError,
    DuplicateKeyError,
    InsufficientCohortError,
    LeakageError,
    LongpanelError,
    PanelFormatError,
    ParameterError,
    RankError,
    UndefinedMetricError,
)
from .features import (
    HIDDEN_SIZE_GRID,
    HistoryEncoding,
    PcaReducer,
    encode_history,
    encode_windows,
)
from .metrics import (
    MAE,
    METRIC_NAMES,
    PEARSON_R,
    SMAPE,
    MetricScope,
    PredictionSet,
    ReportCell,
    ScopedMetricReport,
    mae,
    mae_standard_error,
    paired_one_sided_t,
    pearson_r,
    scoped,
    scoped_report,
    smape,
)
from .models import (
    DEFAULT_PENALTY_GRID,
    CausalWindowTransformer,
    MeanBaseline,
    RidgeRegressor,
    SelectionTrace,
    load_model,
    param_hash,
    save_model,
    select_ridge,
)
from .panel import (
    CoverageWarning,
    HistoryDataset,
    Observation,
    Panel,
    PanelSchema,
    PersonSeries,
    TaskMode,
    build_instances,
    filter_coverage,
    impute_locf,
    load_panel,
    save_panel,
)
from .runner import (
    ExperimentConfig,
    ExperimentResult,
    run,
    run_to_dir,
)
from .splits import (
    Assignment,
    AuditReport,
    Regime,
    SplitPlan,
    StratificationSpec,
    audit,
    audit_plan,
    carve_dev,
    mask_to_match,
    select_cohort,
    split_cross_and_prospective,
    split_cross_sectional,
    split_prospective,
    split_traditional,
)
from .synthetic import (
    CohortSpec,
    GroundTruth,
    generate,
    oracle_between_only_predictor,
)

__all__ = [name for name in dir() if not name.startswith("_")]
