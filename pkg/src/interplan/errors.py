"""Exception types shared across the package."""


class InterplanError(Exception):
    """Base class for all package errors."""


class ConfigError(InterplanError):
    """Invalid configuration values (bad ranges, non-normalized weights, ...)."""


class ContractViolation(InterplanError):
    """A caller broke a documented precondition (mismatched grids, bad indices)."""


class EnumerationBudgetError(InterplanError):
    """Exact enumeration refused: K**N exceeds the configured budget."""


class GenerationError(InterplanError):
    """Scenario generation could not satisfy a template constraint."""


class SceneFormatError(InterplanError):
    """A scene/weights/result file failed to parse or validate."""


class TrainingDiverged(InterplanError):
    """Training loss became non-finite; carries the partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
