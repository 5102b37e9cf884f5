from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum


class ErrorCategory(str, Enum):
    VALIDATION = "validation"
    PARSE = "parse"
    CONFIG = "config"
    INFEASIBLE = "infeasible"
    TIMEOUT = "timeout"
    RUNTIME = "runtime"


@dataclass
class ErrorRecord:
    category: ErrorCategory
    message: str
    detail: str = ""
    recoverable: bool = True

    def to_dict(self) -> dict[str, object]:
        data = asdict(self)
        data["category"] = self.category.value
        return data

    @classmethod
    def from_exception(cls, exc: BaseException, detail: str = "") -> "ErrorRecord":
        category = getattr(exc, "category", None) or classify_error(str(exc))
        return cls(category=category, message=str(exc), detail=detail)


class TomographyError(Exception):
    category = ErrorCategory.RUNTIME
    exit_code = 1


class InstanceValidationError(TomographyError):
    category = ErrorCategory.VALIDATION
    exit_code = 2

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class InstanceParseError(InstanceValidationError):
    category = ErrorCategory.PARSE


class ConfigError(TomographyError):
    category = ErrorCategory.CONFIG
    exit_code = 2


class SolverTimeout(TomographyError):
    category = ErrorCategory.TIMEOUT
    exit_code = 3


def classify_error(message: str) -> ErrorCategory:
    lowered = message.lower()
    if any(term in lowered for term in ["json", "parse", "decode", "malformed"]):
        return ErrorCategory.PARSE
    if any(term in lowered for term in ["must be", "invalid", "out of grid", "duplicate", "shape"]):
        return ErrorCategory.VALIDATION
    if any(term in lowered for term in ["config", "yaml", "unknown key"]):
        return ErrorCategory.CONFIG
    if "infeasible" in lowered:
        return ErrorCategory.INFEASIBLE
    if any(term in lowered for term in ["timeout", "time limit", "timed out"]):
        return ErrorCategory.TIMEOUT
    return ErrorCategory.RUNTIME
