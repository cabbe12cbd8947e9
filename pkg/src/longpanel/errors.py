"""Exception types shared across the toolkit."""


class LongpanelError(Exception):
    """Base class for all toolkit errors."""


class PanelFormatError(LongpanelError):
    """A panel CSV row violates the file format or a panel invariant."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class DuplicateKeyError(PanelFormatError):
    """The same (person, day) appears more than once."""


class ParameterError(LongpanelError):
    """An argument is outside its documented domain."""


class InsufficientCohortError(LongpanelError):
    """A stratum has fewer persons than the requested sample size."""


class DegeneratePlanError(LongpanelError):
    """A split produced an empty train or test side where one is required."""


class LeakageError(LongpanelError):
    """A split plan violates its regime's leakage guarantees."""


class UndefinedMetricError(LongpanelError):
    """The metric is undefined on this input (empty, zero variance, ...)."""


class DegenerateTestError(LongpanelError):
    """The paired test statistic is undefined (zero-variance differences)."""


class RankError(LongpanelError):
    """Requested more components than the centered data's numerical rank."""


class DivergenceError(LongpanelError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, step=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step
