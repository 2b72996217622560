"""Exception hierarchy; exit codes are the ones the command line reports."""
from typing import Optional


class XYLabError(Exception):
    exit_code = 1


class ConfigError(XYLabError):
    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class ConvergenceError(XYLabError):
    exit_code = 3

    def __init__(self, reason: str, residual: float, c: Optional[float] = None):
        self.reason = reason
        self.residual = residual
        self.c = c
        text = reason if c is None else f"{reason} (c={c:g})"
        super().__init__(f"{text}; last residual {residual:.3e}")

    def tagged(self, c: float) -> "ConvergenceError":
        return ConvergenceError(self.reason, self.residual, c)


class HypothesisViolation(XYLabError):
    exit_code = 4

    def __init__(self, detail: str = ""):
        message = "LDP hypothesis violated"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class DomainError(XYLabError):
    exit_code = 2


class UnderdeterminedWordError(XYLabError):
    def __init__(self, needed: int, available: int):
        super().__init__(f"underdetermined word: need {needed} letters, have {available}")
        self.needed = needed
        self.available = available


class SearchTooLargeError(XYLabError):
    def __init__(self, size: float, limit: int):
        super().__init__(f"search of {size:.3g} words exceeds the limit {limit}")
        self.size = size
        self.limit = limit
