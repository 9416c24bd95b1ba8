from __future__ import annotations


class NLevelError(Exception):
    """Base class for every error raised by nlevel_core."""


class ConfigError(NLevelError, ValueError):
    """Run configuration could not be parsed or is missing a field."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ModelDomainError(NLevelError, ValueError):
    """Model parameter outside its admissible range."""


class NumericalFailure(NLevelError, RuntimeError):
    """A numerical procedure could not produce a trustworthy result."""


class DimensionMismatch(NumericalFailure, ValueError):
    pass


class DegenerateSpectrum(NumericalFailure):
    def __init__(self, message: str, min_gap: float = 0.0, point: complex | None = None):
        self.min_gap = min_gap
        self.point = point
        super().__init__(message)


class NonConvergence(NumericalFailure):
    pass


class PathThroughDegeneracy(NumericalFailure):
    def __init__(self, message: str, point: complex | None = None):
        self.point = point
        super().__init__(message)


class StepFailure(NumericalFailure):
    pass


class SingularW(NumericalFailure):
    pass


class NonProportional(NumericalFailure):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(message)


class WindowTooSmall(NumericalFailure):
    pass


class NewtonDivergence(NumericalFailure):
    def __init__(self, message: str, seed: complex):
        self.seed = seed
        super().__init__(message)


class ConstructionFailure(NumericalFailure):
    pass


class NoCrossingChain(NumericalFailure):
    pass


class NotApplicable(NumericalFailure):
    pass


class DynamicRangeExceeded(NumericalFailure):
    pass


class GapCollapse(NumericalFailure):
    def __init__(self, message: str, q: int):
        self.q = q
        super().__init__(message)


class NullVector(NumericalFailure):
    pass


class PositivityViolated(NumericalFailure):
    pass


class DivisionGuard(NumericalFailure):
    pass


__all__ = [
    "NLevelError", "ConfigError", "ModelDomainError", "NumericalFailure",
    "DimensionMismatch", "DegenerateSpectrum", "NonConvergence",
    "PathThroughDegeneracy", "StepFailure", "SingularW", "NonProportional",
    "WindowTooSmall", "NewtonDivergence", "ConstructionFailure",
    "NoCrossingChain", "NotApplicable", "DynamicRangeExceeded", "GapCollapse",
    "NullVector", "PositivityViolated", "DivisionGuard",
]
