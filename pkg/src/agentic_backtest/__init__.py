"""Deterministic, replayable agentic-trading engine.

Walk-forward GBT/ridge prediction, regime-aware signal blending, a layered
risk stack, a bar-level execution simulator, an in-process orchestrator
with an audit log, and a UUID-addressed memory store with leakage gates.
"""
__version__ = "0.1.0"

from .errors import (AgenticError, ConfigError, DataError, LeakageError, ParameterError,  # noqa: E402
                     ValidationError)

__all__ = ["__version__", "AgenticError", "ConfigError", "DataError", "LeakageError", "ParameterError",
           "ValidationError"]
