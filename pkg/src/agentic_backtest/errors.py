"""Exception hierarchy shared by every module.

Each error carries the module it came from and a remediation hint so the CLI
can surface a machine-readable report and map the failure to an exit code.
"""
from __future__ import annotations


class AgenticError(Exception):
    exit_code = 5
    module = "core"

    def __init__(self, message: str, *, module: str | None = None, hint: str | None = None):
        super().__init__(message)
        if module is not None:
            self.module = module
        self.hint = hint or ""

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "module": self.module,
            "message": str(self),
            "hint": self.hint,
            "exitCode": self.exit_code,
        }


class ConfigError(AgenticError, ValueError):
    exit_code = 2
    module = "cli"


class ParameterError(AgenticError, ValueError):
    """Argument outside its documented domain."""

    exit_code = 2


class DataError(AgenticError, ValueError):
    exit_code = 3


class ParseError(DataError):
    module = "ingest"

    def __init__(self, message: str, *, line: int | None = None, **kw):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, **kw)
        self.line = line


class EmptyInputError(DataError):
    module = "ingest"


class AmbiguityError(DataError):
    module = "ingest"


class InsufficientHistoryError(DataError):
    module = "features"


class SchemaError(DataError):
    pass


class DegenerateFitError(DataError):
    module = "features"


class TransportError(AgenticError):
    module = "ingest"

    def __init__(self, message: str, *, retries: int = 0, **kw):
        super().__init__(f"{message} (after {retries} retries)", **kw)
        self.retries = retries


class LeakageError(AgenticError):
    """A context or memory record could carry evaluation-window information."""

    exit_code = 4
    module = "memory"

    def __init__(self, message: str, *, violations: list[str] | None = None, **kw):
        super().__init__(message, **kw)
        self.violations = list(violations or [])

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["violations"] = self.violations
        return d


class ImmutabilityError(AgenticError):
    module = "memory"


class NotFoundError(AgenticError, KeyError):
    module = "memory"

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return self.args[0] if self.args else ""


class NamespaceViolation(LeakageError):
    pass


class RoutingError(AgenticError):
    module = "orchestrator"


class ValidationError(AgenticError, ValueError):
    module = "orchestrator"
