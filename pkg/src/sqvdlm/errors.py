"""Exception hierarchy shared by every module in the package."""


class SqvDlmError(Exception):
    """Base class for all package errors."""


class ParseError(SqvDlmError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        self.message = message
        super().__init__(f"{self.path}:{line}: {message}")


class CoverageError(SqvDlmError):
    def __init__(self, months):
        self.months = list(months)
        listed = ", ".join(str(m) for m in self.months)
        super().__init__(f"weekly data does not cover months: {listed}")


class DemeanError(SqvDlmError):
    pass


class SplitError(SqvDlmError):
    pass


class ParameterDomainError(SqvDlmError, ValueError):
    pass


class DegeneracyError(SqvDlmError):
    """Innovation covariance could not be factorized."""

    def __init__(self, t, message="innovation covariance is numerically singular"):
        self.t = t
        super().__init__(f"{message} at t={t}")


class DegenerateDesignError(SqvDlmError):
    pass


class EstimationError(SqvDlmError):
    """No starting point / candidate produced a usable fit."""

    def __init__(self, message, details=None):
        self.details = dict(details or {})
        lines = [message] + [f"  {k}: {v}" for k, v in self.details.items()]
        super().__init__("\n".join(lines))


class PrewhiteningError(SqvDlmError):
    pass


class UndefinedMetricError(SqvDlmError):
    pass
